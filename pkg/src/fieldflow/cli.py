"""Command-line front end.

Subcommands: generate, preprocess, train, enhance, evaluate.
Exit codes: 0 success, 2 configuration error, 3 numerical divergence,
4 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import sys
from pathlib import Path

import numpy as np

from fieldflow import metrics
from fieldflow.config import ConfigError, RunConfig
from fieldflow.flow import DivergedSamplerError, euler_enhance
from fieldflow.nifti_io import NiftiError, read_nifti, write_nifti
from fieldflow.preprocess import conform
from fieldflow.synth import make_paired_dataset
from fieldflow.task import FieldTask
from fieldflow.velocity_net import (
    CheckpointError,
    DivergedTrainingError,
    VelocityModel,
    load_checkpoint,
    save_checkpoint,
    train,
)
from fieldflow.volume import Volume3D

log = logging.getLogger("fieldflow")

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_IO = 0, 2, 3, 4

MANIFEST_COLUMNS = ("id", "split", "task", "modality", "lf_path", "hf_path")
METRIC_COLUMNS = ("id", "task", "modality", "nrmse_pct", "psnr_db", "ssim_pct")


class InputFileError(OSError):
    pass


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_text(path: Path, text: str):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _write_resolved(cfg: RunConfig):
    _write_text(_out_dir(cfg) / "resolved_config.txt", cfg.resolved_text())


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def read_manifest(path) -> list[dict]:
    path = Path(path)
    if not path.is_file():
        raise InputFileError(f"manifest not found: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if rows and tuple(rows[0].keys()) != MANIFEST_COLUMNS:
        raise ConfigError(f"{path}: unexpected manifest columns {tuple(rows[0].keys())}")
    return rows


def _load_pair(row: dict, root: Path):
    vols = []
    for key in ("lf_path", "hf_path"):
        p = root / row[key]
        if not p.is_file():
            raise InputFileError(f"missing volume file for id {row['id']}: {p}")
        vols.append(read_nifti(p)[0])
    task = FieldTask.parse(f"{row['modality']}:{row['task']}")
    return vols[0], vols[1], task


def cmd_generate(cfg: RunConfig) -> Path:
    """Write seeded phantom pairs plus ``manifest.csv``; returns the manifest path."""
    out = _out_dir(cfg)
    _write_resolved(cfg)
    ds = make_paired_dataset(
        cfg["data.n"],
        cfg["data.shape"],
        list(cfg["data.tasks"]),
        cfg["seed"],
        n_ellipsoids=cfg["data.n_ellipsoids"],
        texture_amp=cfg["data.texture_amp"],
    )
    if not ds.train_idx:
        raise ConfigError("dataset too small to split: the training split would be empty")
    rows = []
    test = set(ds.test_idx)
    for i, (x_lf, x_hf, task) in enumerate(ds.items):
        split = "test" if i in test else "train"
        (out / split).mkdir(exist_ok=True)
        ident = f"{i:04d}"
        lf_rel = f"{split}/{ident}_lf.nii"
        hf_rel = f"{split}/{ident}_hf.nii"
        write_nifti(x_lf, out / lf_rel)
        write_nifti(x_hf, out / hf_rel)
        rows.append((ident, split, task.transition, task.modality, lf_rel, hf_rel))
    manifest = out / "manifest.csv"
    _write_text(manifest, _csv_text(MANIFEST_COLUMNS, rows))
    log.info("wrote %d train / %d test pairs to %s", len(ds.train_idx), len(ds.test_idx), out)
    return manifest


def cmd_preprocess(cfg: RunConfig, src, dst, p_lo=None, p_hi=None, target_z_mm=None, target_shape=None) -> Path:
    vol, hdr = read_nifti(src)
    out = conform(
        vol,
        cfg["preprocess.plo"] if p_lo is None else p_lo,
        cfg["preprocess.phi"] if p_hi is None else p_hi,
        cfg["preprocess.target_z_mm"] if target_z_mm is None else target_z_mm,
        cfg["preprocess.target_shape"] if target_shape is None else target_shape,
    )
    write_nifti(out, dst, template=hdr)
    return Path(dst)


def cmd_train(cfg: RunConfig, manifest=None, checkpoint=None) -> Path:
    """Train on the manifest's train split; writes the checkpoint and ``loss.csv``."""
    out = _out_dir(cfg)
    _write_resolved(cfg)
    manifest = Path(manifest) if manifest else out / "manifest.csv"
    rows = [r for r in read_manifest(manifest) if r["split"] == "train"]
    if not rows:
        raise ConfigError(f"{manifest}: no training rows")
    dataset = [_load_pair(r, manifest.parent) for r in rows]
    train_cfg = cfg.train_config()
    model = VelocityModel(hidden=cfg["model.hidden"], seed=cfg["seed"])
    log.info("training %d parameters for %d iterations", model.n_params, train_cfg.total_iters)
    history = train(model, dataset, train_cfg, cfg.fasrm_config())
    _write_text(out / "loss.csv", history.to_csv())
    ckpt = Path(checkpoint) if checkpoint else out / "model.ckpt"
    save_checkpoint(model, ckpt, extra={"shape": list(dataset[0][0].shape)})
    return ckpt


def write_pgm(path, slice2d: np.ndarray):
    """8-bit binary PGM of a 2D array indexed ``[x, y]``; values ``round(255 * v)``."""
    nx, ny = slice2d.shape
    pix = np.clip(np.rint(255.0 * np.clip(slice2d, 0.0, 1.0)), 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5 {nx} {ny} 255\n".encode("ascii"))
        # rows run over y, x varies fastest within a row
        fh.write(pix.T.tobytes())


def _load_model(checkpoint, shape):
    path = Path(checkpoint)
    if not path.is_file():
        raise InputFileError(f"checkpoint not found: {path}")
    model, meta = load_checkpoint(path)
    trained = tuple(meta.get("shape", shape))
    if trained != tuple(shape):
        raise ConfigError(f"checkpoint expects volumes of shape {trained}, input has shape {tuple(shape)}")
    return model


def cmd_enhance(cfg: RunConfig, checkpoint, src, dst, task: FieldTask, dump_slices=False) -> Volume3D:
    if not Path(src).is_file():
        raise InputFileError(f"input volume not found: {src}")
    x_lf, hdr = read_nifti(src)
    model = _load_model(checkpoint, x_lf.shape)
    out = euler_enhance(model, x_lf, task, cfg.sampler_config())
    write_nifti(out, dst, template=hdr)
    if dump_slices:
        stem = Path(dst).with_suffix("")
        mid = x_lf.shape[2] // 2
        write_pgm(f"{stem}_input_mid.pgm", x_lf.data[:, :, mid])
        write_pgm(f"{stem}_output_mid.pgm", out.data[:, :, mid])
    return out


def _metric_row(ident, task, report):
    return (
        ident,
        task.transition,
        task.modality,
        repr(report.nrmse_pct),
        repr(report.psnr_db),
        repr(report.ssim_pct),
    )


def cmd_evaluate(cfg: RunConfig, checkpoint, manifest=None) -> Path:
    """Metrics of enhanced and unenhanced test volumes against ground truth.

    Row ids are ``<id>:enhanced`` and ``<id>:input``; trailing summary rows
    ``mean:enhanced`` / ``mean:input`` hold per-task means.
    """
    out = _out_dir(cfg)
    _write_resolved(cfg)
    manifest = Path(manifest) if manifest else out / "manifest.csv"
    rows = sorted((r for r in read_manifest(manifest) if r["split"] == "test"), key=lambda r: r["id"])
    if not rows:
        raise ConfigError(f"{manifest}: test split is empty")
    model = None
    table, groups = [], {}
    for r in rows:
        x_lf, x_hf, task = _load_pair(r, manifest.parent)
        if model is None:
            model = _load_model(checkpoint, x_lf.shape)
        seed = cfg["seed"] + int(r["id"])
        enhanced = euler_enhance(model, x_lf, task, cfg.sampler_config(seed))
        for kind, vol in (("enhanced", enhanced), ("input", x_lf)):
            report = metrics.evaluate(vol, x_hf)
            table.append(_metric_row(f"{r['id']}:{kind}", task, report))
            groups.setdefault((kind, task.transition, task.modality), []).append(report)
    summary = []
    for (kind, transition, modality), reports in sorted(groups.items()):
        means = [float(np.mean([getattr(rep, f) for rep in reports])) for f in ("nrmse_pct", "psnr_db", "ssim_pct")]
        summary.append((f"mean:{kind}", transition, modality, *(repr(m) for m in means)))
        print(f"{kind:9s} {modality}:{transition}  NRMSE {means[0]:.2f}%  PSNR {means[1]:.2f} dB  SSIM {means[2]:.2f}%")
    path = out / "metrics.csv"
    _write_text(path, _csv_text(METRIC_COLUMNS, table + summary))
    return path


def _common_flags(default) -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=default, help="key = value configuration file")
    common.add_argument("--seed", type=int, default=default, help="global seed (overrides config)")
    common.add_argument("--out-dir", default=default, help="output directory (overrides config)")
    return common


def build_parser() -> argparse.ArgumentParser:
    # global flags are accepted before or after the subcommand; the
    # subcommand copies must not overwrite values given before it
    parser = argparse.ArgumentParser(
        prog="fieldflow", parents=[_common_flags(None)], description=__doc__.split("\n")[0]
    )
    common = _common_flags(argparse.SUPPRESS)
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("generate", parents=[common], help="write synthetic phantom pairs and a manifest")

    p = sub.add_parser("preprocess", parents=[common], help="normalize, z-resample and resize a volume")
    p.add_argument("--in", dest="src", required=True)
    p.add_argument("--out", dest="dst", required=True)
    p.add_argument("--plo", type=float)
    p.add_argument("--phi", type=float)
    p.add_argument("--target-z-mm", type=float)
    p.add_argument("--target-shape", help="nx,ny,nz")

    p = sub.add_parser("train", parents=[common], help="train the velocity network")
    p.add_argument("--manifest")
    p.add_argument("--checkpoint")

    p = sub.add_parser("enhance", parents=[common], help="enhance one low-field volume")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--task", required=True, help="e.g. T1:64mT_to_3T")
    p.add_argument("--steps", type=int)
    p.add_argument("--dump-slices", action="store_true")

    p = sub.add_parser("evaluate", parents=[common], help="metrics of enhanced test volumes")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest")
    p.add_argument("--steps", type=int)
    return parser


def _resolve_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig.defaults()
    if args.seed is not None:
        cfg.set("seed", args.seed)
    if args.out_dir is not None:
        cfg.set("out_dir", args.out_dir)
    if getattr(args, "steps", None) is not None:
        cfg.set("sampler.steps", args.steps)
    return cfg


def run(args) -> None:
    cfg = _resolve_config(args)
    if args.command == "generate":
        cmd_generate(cfg)
    elif args.command == "preprocess":
        shape = None
        if args.target_shape:
            try:
                shape = tuple(int(s) for s in args.target_shape.split(","))
            except ValueError:
                raise ConfigError(f"bad --target-shape {args.target_shape!r}") from None
        cmd_preprocess(cfg, args.src, args.dst, args.plo, args.phi, args.target_z_mm, shape)
    elif args.command == "train":
        cmd_train(cfg, args.manifest, args.checkpoint)
    elif args.command == "enhance":
        try:
            task = FieldTask.parse(args.task)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        cmd_enhance(cfg, args.checkpoint, args.input, args.output, task, args.dump_slices)
    elif args.command == "evaluate":
        cmd_evaluate(cfg, args.checkpoint, args.manifest)


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        run(args)
    except (DivergedTrainingError, DivergedSamplerError) as exc:
        log.error("%s", exc)
        return EXIT_DIVERGED
    except (OSError, NiftiError, CheckpointError) as exc:
        log.error("%s", exc)
        return EXIT_IO
    except (ConfigError, ValueError) as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
