"""
self-introspect command line

Every command reads the run configuration (preset, optional YAML file, flags),
loads the artifacts earlier stages left under `<output_dir>/<tag>/`, writes
its own, and appends one JSON line to `<output_dir>/run_log.jsonl`.

    self-introspect fetch
    self-introspect train --seed 1
    self-introspect autoencode --seed 1
    self-introspect estimate --seed 1
    self-introspect atlas --seed 1
    self-introspect violin --seed 1
"""

import argparse
import hashlib
import json
import logging
import subprocess
import sys
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

import numpy as np
from pydantic import ValidationError

from . import __version__
from .analysis import (
    apply_permutation,
    attack_campaign,
    build_atlas,
    estimate_grid,
    noise_accuracy_curve,
    noise_constellation,
    training_trajectories,
    violin_report,
)
from .artifacts import (
    export_container,
    export_patterns,
    export_scatter,
    load_model,
    save_model,
    write_csv,
)
from .artifacts.export import HISTORY_HEADER
from .config import RunConfig, list_presets, load_run_config
from .datasets import Dataset, download_mnist, prepare_splits, representativeness
from .errors import MissingArtifactError
from .models import (
    accuracy,
    encode_batch,
    latent_mmd,
    predict,
    record_activations,
    train_autoencoder,
    train_classifier,
    train_estimator,
)
from .sentry_config import init_sentry
from .settings import settings

logger = logging.getLogger(__name__)

COMMANDS = (
    "fetch",
    "train",
    "autoencode",
    "estimate",
    "atlas",
    "reorder",
    "constellation",
    "attack",
    "violin",
    "robustness",
    "export",
)

# artifact -> (container kind, command that produces it)
ARTIFACTS: dict[str, tuple[str, str]] = {
    "classifier": ("classifier", "train"),
    "records_train": ("records", "train"),
    "records_val": ("records", "train"),
    "records_test": ("records", "train"),
    "history": ("records", "train --history-probe N"),
    "autoencoder": ("autoencoder", "autoencode"),
    "autoencoder_history": ("autoencoder", "autoencode --history"),
    "estimator": ("estimator", "estimate"),
    "patterns": ("patterns", "atlas"),
    "classifier_sorted": ("classifier", "reorder"),
}


def describe_version() -> str:
    """`git describe` of the source checkout, or the package version outside one."""
    try:
        result = subprocess.run(
            ["git", "describe", "--tags", "--always", "--dirty"],
            cwd=Path(__file__).parent,
            capture_output=True,
            text=True,
            timeout=5,
        )
    except (OSError, subprocess.SubprocessError):
        return __version__
    described = result.stdout.strip()
    return described if result.returncode == 0 and described else __version__


def sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


@dataclass
class Workspace:
    """Artifact directory of one tag plus the list of files this command wrote."""

    root: Path
    tag: str = "clean"
    written: list[Path] = field(default_factory=list)

    @property
    def directory(self) -> Path:
        return self.root / self.tag

    def artifact(self, name: str) -> Path:
        return self.directory / f"{name}.sint"

    def file(self, name: str) -> Path:
        return self.directory / name

    def has(self, name: str) -> bool:
        return self.artifact(name).exists()

    def load(self, name: str):
        kind, command = ARTIFACTS[name]
        path = self.artifact(name)
        if not path.exists():
            raise MissingArtifactError(name, path, command)
        return load_model(path, expected_kind=kind)

    def save(self, component, name: str) -> Path:
        return self.track(save_model(component, self.artifact(name)))

    def track(self, path: Path) -> Path:
        self.written.append(Path(path))
        return Path(path)

    def track_all(self, paths: list[Path]) -> list[Path]:
        return [self.track(p) for p in paths]


def append_run_log(config: RunConfig, command: str, status: int, workspace: Workspace, error: str | None):
    entry: dict[str, Any] = {
        "time": datetime.now(timezone.utc).isoformat(),
        "command": command,
        "status": status,
        "tag": workspace.tag,
        "seed": config.seed,
        "config_hash": config.config_hash(),
        "version": describe_version(),
        "artifacts": {
            str(path.relative_to(workspace.root)): sha256_file(path)
            for path in workspace.written
            if path.exists()
        },
    }
    if error:
        entry["error"] = error
    workspace.root.mkdir(parents=True, exist_ok=True)
    with open(workspace.root / "run_log.jsonl", "a", encoding="utf-8") as f:
        f.write(json.dumps(entry, sort_keys=True) + "\n")


# ============================================================================
# COMMANDS
# ============================================================================


def _history_probe(test: Dataset, size: int) -> Dataset | None:
    if size <= 0:
        return None
    return test.subset(np.arange(min(size, len(test))))


def cmd_fetch(config: RunConfig, ws: Workspace, **_) -> None:
    paths = download_mnist(config.data.directory)
    logger.info(f"MNIST files available in {config.data.directory}: {[p.name for p in paths]}")


def cmd_train(
    config: RunConfig,
    ws: Workspace,
    noise_inject: float | None = None,
    history_probe: int | None = None,
    **_,
) -> None:
    train, val, test = prepare_splits(config)
    d_train, d_val = representativeness(train, val, test, rng=np.random.default_rng(config.seed))
    logger.info(f"Hausdorff distance to the test set: train {d_train:.3f}, validation {d_val:.3f}")

    hidden_layers, hidden_units = config.classifier_shape
    probe_size = config.experiments.history_probe if history_probe is None else history_probe
    model, history = train_classifier(
        train,
        val,
        config.classifier,
        hidden_layers=hidden_layers,
        hidden_units=hidden_units,
        snapshot_probe=_history_probe(test, probe_size),
        test=test,
        input_noise_max=noise_inject or 0.0,
    )
    logger.info(f"Classifier test accuracy: {accuracy(model, test):.4f}")
    ws.save(model, "classifier")
    for name, data in (("records_train", train), ("records_val", val), ("records_test", test)):
        records = record_activations(
            model, data.inputs, data.labels, data.sample_ids, workers=config.workers
        )
        ws.save(records, name)
    if history is not None:
        ws.save(history, "history")
    ws.track(
        write_csv(
            ws.file("classifier_history.csv"),
            HISTORY_HEADER,
            [(h.cycle, h.train_error, h.val_error, h.test_accuracy) for h in model.history],
        )
    )


def cmd_autoencode(config: RunConfig, ws: Workspace, history: bool = False, **_) -> None:
    ws.load("classifier")
    if history:
        records = ws.load("history")
        vae = train_autoencoder(
            records,
            config.autoencoder,
            mmd_weight=config.mmd_weight,
            kernel_bandwidth_sq=config.kernel_bandwidth_sq,
            hidden_units=config.introspector_units,
        )
        ws.save(vae, "autoencoder_history")
        trajectories = training_trajectories(vae, records)
        rows = [
            (t.sample_id, t.label, int(c), float(z[0]), float(z[1]), int(p))
            for t in trajectories
            for c, z, p in zip(t.cycles, t.latents, t.predicted)
        ]
        ws.track(
            write_csv(
                ws.file("history_trajectories.csv"),
                ("sample_id", "label", "cycle", "z1", "z2", "predicted"),
                rows,
            )
        )
        ws.track(
            export_scatter(
                ws.file("history_atlas.svg"),
                [((t.latents[-1][0], t.latents[-1][1]), t.label, None) for t in trajectories],
                extent=config.grid.extent,
                trajectories=[t.latents for t in trajectories],
                title="Training history",
            )
        )
        return

    train = ws.load("records_train")
    val = ws.load("records_val")
    vae = train_autoencoder(
        train,
        config.autoencoder,
        mmd_weight=config.mmd_weight,
        kernel_bandwidth_sq=config.kernel_bandwidth_sq,
        hidden_units=config.introspector_units,
        val=val,
    )
    mmd = latent_mmd(vae, val.h, 4096, np.random.default_rng(config.component_seed("mmd")))
    logger.info(f"Autoencoder trained; validation latent MMD^2 against the prior: {mmd:.5f}")
    ws.save(vae, "autoencoder")


def cmd_estimate(config: RunConfig, ws: Workspace, **_) -> None:
    vae = ws.load("autoencoder")
    train = ws.load("records_train")
    val = ws.load("records_val")
    est = train_estimator(
        vae,
        train,
        config.estimator,
        target_floor=config.error_floor,
        hidden_units=config.introspector_units,
        val=val,
    )
    ws.save(est, "estimator")

    test = ws.load("records_test")
    z = encode_batch(vae, test.h)
    ws.track(
        export_scatter(
            ws.file("atlas_test.svg"),
            [((a, b), int(label), None) for (a, b), label in zip(z, test.y_true)],
            extent=config.grid.extent,
            heatmap=(config.grid.axis(), estimate_grid(est, config.grid)),
            title="Test set atlas",
        )
    )


def cmd_atlas(config: RunConfig, ws: Workspace, **_) -> None:
    classifier = ws.load("classifier")
    vae = ws.load("autoencoder")
    train = ws.load("records_train")
    atlas = build_atlas(
        vae, encode_batch(vae, train.h), train.y_true, config.grid, classifier.hidden_widths
    )
    ws.save(atlas, "patterns")
    ws.track_all(export_patterns(atlas, ws.directory, "atlas"))


def cmd_reorder(config: RunConfig, ws: Workspace, **_) -> None:
    classifier = ws.load("classifier")
    atlas = ws.load("patterns")
    reordered = apply_permutation(classifier, atlas.assignment)
    _, _, test = prepare_splits(config)
    before, y_before = predict(classifier, test.inputs)
    after, y_after = predict(reordered, test.inputs)
    logger.info(
        f"Reordered classifier agrees on {np.mean(before == after) * 100:.2f}% of "
        f"{len(test)} test labels, max |dy| = {np.max(np.abs(y_before - y_after)):.2e}"
    )
    ws.save(reordered, "classifier_sorted")


def cmd_constellation(config: RunConfig, ws: Workspace, **_) -> None:
    classifier = ws.load("classifier")
    vae = ws.load("autoencoder")
    est = ws.load("estimator")
    _, _, test = prepare_splits(config)
    settings_ = config.experiments
    position = test.position_of(settings_.constellation_sample)
    constellations = noise_constellation(
        classifier,
        vae,
        est,
        test.inputs[position],
        settings_.constellation_sigmas,
        settings_.constellation_draws,
        np.random.default_rng(config.component_seed("constellation")),
        sample_id=settings_.constellation_sample,
    )
    rows = [
        (c.sigma, i, float(z[0]), float(z[1]), int(label), float(e), float(d[0]), float(d[1]))
        for c in constellations
        for i, (z, label, e, d) in enumerate(zip(c.latents, c.labels, c.e_log10, c.displacement))
    ]
    ws.track(
        write_csv(
            ws.file("constellation.csv"),
            ("sigma", "draw", "z1", "z2", "label", "e_log10", "dz1", "dz2"),
            rows,
        )
    )
    test_records = ws.load("records_test")
    background = [
        ((a, b), int(label), None)
        for (a, b), label in zip(encode_batch(vae, test_records.h), test_records.y_true)
    ]
    for c in constellations:
        ws.track(
            export_scatter(
                ws.file(f"constellation_sigma{c.sigma:g}.svg"),
                background + [((z[0], z[1]), int(label), "draw") for z, label in zip(c.latents, c.labels)],
                extent=config.grid.extent,
                title=f"Sample {c.sample_id}, sigma {c.sigma:g}",
            )
        )


def cmd_attack(config: RunConfig, ws: Workspace, **_) -> None:
    classifier = ws.load("classifier")
    vae = ws.load("autoencoder")
    _, _, test = prepare_splits(config)
    exp = config.experiments
    campaign = attack_campaign(
        classifier,
        vae,
        test,
        exp.attack_samples,
        exp.fgsm_eps,
        exp.fgsm_steps,
        np.random.default_rng(config.component_seed("attack")),
        continue_after_success=exp.fgsm_continue_after_success,
        workers=config.workers,
    )
    rows = [
        (t.source_id, t.source_label, t.target, s.step, s.digest, s.z.z1, s.z.z2, s.label)
        for t in campaign.trajectories
        for s in t.steps
    ]
    ws.track(
        write_csv(
            ws.file("attack_steps.csv"),
            ("sample_id", "label", "target", "step", "input_sha1", "z1", "z2", "predicted"),
            rows,
        )
    )
    ws.track(
        write_csv(
            ws.file("attack_summary.csv"),
            ("sample_id", "label", "target", "success", "success_step", "steps"),
            [
                (t.source_id, t.source_label, t.target, int(t.success), t.success_step, len(t.steps))
                for t in campaign.trajectories
            ],
        )
    )
    ws.track(
        export_scatter(
            ws.file("attack_trajectories.svg"),
            [((t.steps[-1].z.z1, t.steps[-1].z.z2), t.target, "end") for t in campaign.trajectories],
            extent=config.grid.extent,
            trajectories=[t.latents for t in campaign.trajectories],
            title=f"FGSM eps={exp.fgsm_eps:g}, success {campaign.success_fraction:.2f}",
        )
    )


def cmd_violin(config: RunConfig, ws: Workspace, **_) -> None:
    classifier = ws.load("classifier")
    vae = ws.load("autoencoder")
    est = ws.load("estimator")
    _, _, test = prepare_splits(config)
    report = violin_report(classifier, vae, est, test)
    ws.track(
        write_csv(
            ws.file("violin.csv"),
            ("sample_id", "label", "predicted", "correct", "e_log10"),
            report.rows(),
        )
    )
    ws.track(
        write_csv(
            ws.file("violin_summary.csv"),
            ("class", "n_correct", "n_misclassified", "sensitivity", "median_correct", "median_misclassified"),
            report.summary_rows(),
        )
    )


def cmd_robustness(config: RunConfig, ws: Workspace, noisy_tag: str = "noisy", **_) -> None:
    _, _, test = prepare_splits(config)
    models = {ws.tag: ws.load("classifier")}
    noisy = Workspace(ws.root, noisy_tag)
    if noisy_tag != ws.tag and noisy.has("classifier"):
        models[noisy_tag] = noisy.load("classifier")
    else:
        logger.warning(f"No classifier under tag '{noisy_tag}'; reporting '{ws.tag}' only")
    rows = []
    for tag, model in models.items():
        curve = noise_accuracy_curve(
            model,
            test,
            config.experiments.robustness_sigmas,
            np.random.default_rng(config.component_seed("robustness")),
        )
        rows.extend((tag, sigma, acc) for sigma, acc in curve)
        logger.info(f"{tag}: " + ", ".join(f"sigma={s:g} acc={a:.3f}" for s, a in curve))
    ws.track(write_csv(ws.file("robustness.csv"), ("model", "sigma", "accuracy"), rows))


def cmd_export(config: RunConfig, ws: Workspace, path: str | None = None, out: str | None = None, **_) -> None:
    if path is None:
        raise ValueError("export needs the path of a stored artifact")
    target = Path(path)
    if not target.exists() and ws.artifact(path).exists():
        target = ws.artifact(path)
    if not target.exists():
        raise FileNotFoundError(f"No artifact at {path}")
    ws.track_all(export_container(target, Path(out) if out else ws.directory / "export"))


HANDLERS = {
    "fetch": cmd_fetch,
    "train": cmd_train,
    "autoencode": cmd_autoencode,
    "estimate": cmd_estimate,
    "atlas": cmd_atlas,
    "reorder": cmd_reorder,
    "constellation": cmd_constellation,
    "attack": cmd_attack,
    "violin": cmd_violin,
    "robustness": cmd_robustness,
    "export": cmd_export,
}


def run(command: str, config: RunConfig, tag: str = "clean", **options) -> int:
    """Run one pipeline command. Returns the process exit status."""
    if command not in HANDLERS:
        logger.error(f"Unknown command '{command}'. Must be one of: {list(COMMANDS)}")
        return 2
    config = config.seeded()
    ws = Workspace(Path(config.output_dir), tag)
    status, error = 0, None
    logger.info(f"Running '{command}' (tag={tag}, seed={config.seed})")
    try:
        HANDLERS[command](config, ws, **options)
        logger.info(f"Command succeeded: {command}")
    except (MissingArtifactError, FileNotFoundError) as e:
        status, error = 1, str(e)
        logger.error(f"Command failed: {command} - {e}")
    except Exception as e:
        status, error = 1, str(e)
        logger.error(f"Command failed: {command} - {e}", exc_info=True)
    append_run_log(config, command, status, ws, error)
    return status


# `--noise-inject` given without a value
CONFIGURED = object()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="self-introspect",
        description="Train a classifier, map its activations to a 2D atlas and analyse it.",
    )
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("path", nargs="?", help="artifact to export (export only)")
    parser.add_argument("--config", type=Path, help="YAML run configuration")
    parser.add_argument("--preset", choices=list_presets(), help="base preset (default: desk)")
    parser.add_argument("--seed", type=int, help="global seed (required unless set in the config)")
    parser.add_argument("--output-dir", type=Path, help="artifact root directory")
    parser.add_argument("--data-dir", type=Path, help="directory holding the MNIST IDX files")
    parser.add_argument("--tag", default="clean", help="artifact family (default: clean)")
    parser.add_argument("--workers", type=int, help="threads for read-only forward passes")
    parser.add_argument(
        "--noise-inject",
        nargs="?",
        type=float,
        const=CONFIGURED,
        metavar="SIGMA_MAX",
        help="train with AWGN, sigma ~ U(0, SIGMA_MAX) (default: experiments.noise_sigma_max)",
    )
    parser.add_argument("--history-probe", type=int, metavar="N", help="record N probe samples per cycle")
    parser.add_argument("--history", action="store_true", help="autoencode the per-cycle snapshots")
    parser.add_argument("--noisy-tag", default="noisy", help="tag of the noise-trained classifier (robustness)")
    parser.add_argument("--out", help="export destination directory")
    return parser


def _overrides(args: argparse.Namespace) -> dict[str, Any]:
    overrides: dict[str, Any] = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.output_dir is not None:
        overrides["output_dir"] = str(args.output_dir)
    if args.data_dir is not None:
        overrides["data"] = {"directory": str(args.data_dir)}
    if args.workers is not None:
        overrides["workers"] = args.workers
    elif settings.workers > 1:
        overrides["workers"] = settings.workers
    return overrides


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_run_config(args.config, args.preset, _overrides(args))
    except ValidationError as e:
        logger.error(f"Invalid configuration: {e}")
        return 2
    except (OSError, ValueError) as e:
        logger.error(f"Cannot load configuration: {e}")
        return 2
    noise_inject = config.experiments.noise_sigma_max if args.noise_inject is CONFIGURED else args.noise_inject
    return run(
        args.command,
        config,
        tag=args.tag,
        noise_inject=noise_inject,
        history_probe=args.history_probe,
        history=args.history,
        noisy_tag=args.noisy_tag,
        path=args.path,
        out=args.out,
    )


def entry_point():
    """Entry point for the script command"""
    logging.basicConfig(
        level=getattr(logging, settings.log_level.upper(), logging.INFO),
        format="[%(levelname)s] %(message)s",
    )
    init_sentry()
    sys.exit(main())


if __name__ == "__main__":
    entry_point()
