"""Command-line harness: verify | sample | train | attack | probe | eval.

Every command reads one section of a key=value INI config, accepts --seed
and --out overrides, writes a manifest echoing the resolved configuration,
and emits CSV files whose bytes depend only on that manifest.  Exit codes:
0 success, 1 a configured acceptance threshold failed, 2 usage/format error.
"""

from __future__ import annotations

import argparse
import configparser
import math
import sys
from pathlib import Path

import numpy as np

from . import typical
from .attack import AttackConfig, attack_suite, denoising_pgd, run_attack
from .core import NoiseField, PixelGrid, gaussian_noise
from .corpus import synthetic_corpus
from .denoiser import TrainConfig, forward, load_model, save_model, train
from .metrics import mae, psnr, ssim, transferability_check
from .pgm import PgmError, read_pgm, write_pgm
from .probe import blend_path_scores, patch_attack, radar_probe, sphere_probe
from .rng import SeededRng
from .sampling import NoiseStrategy, TsConfig, density_histogram
from .typical import TypicalSetSpec, monte_carlo_verify

__all__ = ["main"]


class UsageError(Exception):
    """Bad invocation, config, or input file; maps to exit code 2."""


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".12g")
    return str(value)


def _parse_number(text: str) -> float:
    text = text.strip()
    if "/" in text:
        num, _, den = text.partition("/")
        return float(num) / float(den)
    return float(text)


class Section:
    """One config section with typed, defaulted access."""

    def __init__(self, name: str, values: dict):
        self.name = name
        self.values = dict(values)
        self.resolved: dict[str, str] = {}

    def _fetch(self, key: str, default):
        if key in self.values:
            return self.values[key]
        if default is _REQUIRED:
            raise UsageError(f"missing key '{key}' in section [{self.name}]")
        return default

    def get_str(self, key: str, default=None) -> str | None:
        raw = self._fetch(key, default)
        value = raw.strip() if isinstance(raw, str) else raw
        if value is not None:
            self.resolved[key] = str(value)
        return value

    def get_int(self, key: str, default=None) -> int | None:
        raw = self._fetch(key, default)
        if raw is None:
            return None
        try:
            value = int(str(raw).strip())
        except ValueError as exc:
            raise UsageError(f"key '{key}' in [{self.name}] is not an integer") from exc
        self.resolved[key] = _fmt(value)
        return value

    def get_float(self, key: str, default=None) -> float | None:
        raw = self._fetch(key, default)
        if raw is None:
            return None
        try:
            value = _parse_number(str(raw)) if isinstance(raw, str) else float(raw)
        except (ValueError, ZeroDivisionError) as exc:
            raise UsageError(f"key '{key}' in [{self.name}] is not a number") from exc
        self.resolved[key] = _fmt(value)
        return value

    def get_bool(self, key: str, default=None) -> bool | None:
        raw = self._fetch(key, default)
        if raw is None:
            return None
        if isinstance(raw, bool):
            value = raw
        else:
            lowered = str(raw).strip().lower()
            if lowered in ("1", "true", "yes", "on"):
                value = True
            elif lowered in ("0", "false", "no", "off"):
                value = False
            else:
                raise UsageError(f"key '{key}' in [{self.name}] is not a boolean")
        self.resolved[key] = _fmt(value)
        return value


_REQUIRED = object()


def _load_section(config_path: str, command: str) -> Section:
    path = Path(config_path)
    if not path.is_file():
        raise UsageError(f"config file not found: {config_path}")
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(path.read_text())
    except (configparser.Error, UnicodeDecodeError) as exc:
        raise UsageError(f"malformed config file {config_path}: {exc}") from exc
    if command not in parser:
        raise UsageError(f"config file has no [{command}] section")
    return Section(command, dict(parser[command]))


def _write_manifest(out_dir: Path, command: str, entries: dict) -> None:
    lines = [f"{key} = {entries[key]}\n" for key in sorted(entries)]
    (out_dir / f"{command}-manifest.txt").write_text("".join(lines))


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    lines = [",".join(header) + "\n"]
    lines.extend(",".join(_fmt(cell) for cell in row) + "\n" for row in rows)
    path.write_text("".join(lines))


def _load_corpus(spec_text: str, seed: int) -> list[PixelGrid]:
    if spec_text.startswith("synthetic:"):
        shape = spec_text[len("synthetic:") :]
        try:
            count_text, _, size_text = shape.partition("x")
            count, size = int(count_text), int(size_text)
        except ValueError as exc:
            raise UsageError(
                f"bad synthetic corpus spec '{spec_text}' (want synthetic:COUNTxSIZE)"
            ) from exc
        return synthetic_corpus(count, size, seed=seed)
    directory = Path(spec_text)
    if not directory.is_dir():
        raise UsageError(f"corpus directory not found: {spec_text}")
    files = sorted(directory.glob("*.pgm"))
    if not files:
        raise UsageError(f"no .pgm files in corpus directory: {spec_text}")
    try:
        return [read_pgm(f) for f in files]
    except PgmError as exc:
        raise UsageError(f"failed to read corpus image: {exc}") from exc


def _strategy_from(section: Section, prefix: str = "") -> NoiseStrategy:
    kind = section.get_str(prefix + "strategy", "normal")
    sigma = section.get_float(prefix + "sigma", 25.0 / 255.0)
    iterations = section.get_int(prefix + "iterations", 10)
    sigma2 = section.get_float(prefix + "sigma2", None)
    try:
        if kind in ("ts-pres", "ts-def"):
            return NoiseStrategy(kind, sigma, ts=TsConfig(iterations, sigma))
        if kind == "mixed":
            return NoiseStrategy(kind, sigma, sigma2=sigma2)
        return NoiseStrategy(kind, sigma)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _patches(corpus: list[PixelGrid], patch: int, count: int) -> list[PixelGrid]:
    out = []
    for image in corpus:
        grid = image.grid()
        h, w = grid.shape
        for y in range(0, h - patch + 1, patch):
            for x in range(0, w - patch + 1, patch):
                out.append(PixelGrid.from_array(grid[y : y + patch, x : x + patch]))
                if len(out) == count:
                    return out
    if len(out) < count:
        raise UsageError(
            f"corpus yields only {len(out)} {patch}x{patch} patches, need {count}"
        )
    return out


def _noisy_pairs(
    patches: list[PixelGrid], sigma: float, seed: int
) -> list[tuple[PixelGrid, PixelGrid]]:
    root = SeededRng(seed)
    pairs = []
    for i, clean in enumerate(patches):
        if sigma == 0.0:
            pairs.append((clean, clean))
            continue
        noise = root.child(i).normal(clean.values.size, sigma)
        noisy = np.clip(clean.values + noise, 0.0, 1.0)
        pairs.append((clean, PixelGrid(clean.height, clean.width, noisy)))
    return pairs


def cmd_verify(section: Section, seed: int, out_dir: Path) -> int:
    n = section.get_int("n", 4096)
    sigma = section.get_float("sigma", 25.0 / 255.0)
    epsilon = section.get_float("epsilon", 0.05)
    delta = section.get_float("delta", 1e-3)
    budget_norm = section.get_str("budget_norm", "l2")
    eta_default = 3.0 * math.sqrt(n) / 255.0 if budget_norm == "l2" else 3.0 / 255.0
    eta = section.get_float("eta", eta_default)
    trials = section.get_int("trials", 10000)
    l1_tol = section.get_float("l1_tol", 0.05 * n * sigma)
    default_threshold = section.get_float("threshold", delta)

    try:
        spec = TypicalSetSpec(n, sigma, epsilon, delta)
        reports = monte_carlo_verify(
            spec, eta, budget_norm, trials, SeededRng(seed), l1_tol=l1_tol
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc

    rows, all_pass = [], True
    for report in reports:
        threshold = section.get_float(
            "threshold_" + report.bound_tested.replace("-", "_"), default_threshold
        )
        ok = report.empirical_rate <= threshold
        all_pass = all_pass and ok
        rows.append(
            [
                report.bound_tested,
                report.trials,
                report.violations,
                report.empirical_rate,
                threshold,
                "pass" if ok else "fail",
            ]
        )
    _write_csv(
        out_dir / "verify.csv",
        ["bound", "trials", "violations", "rate", "threshold", "status"],
        rows,
    )

    l2_lo, l2_hi = typical.l2_concentration_bounds(spec)
    l1_lo, l1_hi = typical.l1_concentration_bounds(spec, l1_tol)
    shift_lo, shift_hi = typical.logpdf_shift_bounds(spec, eta, budget_norm, l1_tol=l1_tol)
    bound = (
        typical.b2_bound(spec, eta)
        if budget_norm == "l2"
        else typical.binf_bound(spec, eta)
    )
    vol_eps = typical.log2_volume_bounds(epsilon, spec)
    vol_bound = typical.log2_volume_bounds(bound, spec)
    bound_rows = [
        ["entropy_bits", typical.differential_entropy_bits(sigma)],
        ["l2_sq_lo", l2_lo],
        ["l2_sq_hi", l2_hi],
        ["l1_lo", l1_lo],
        ["l1_hi", l1_hi],
        ["logpdf_shift_lo_nats", shift_lo],
        ["logpdf_shift_hi_nats", shift_hi],
        [f"{bound.kind}_bits", bound.value],
        ["log2_volume_eps_lo", vol_eps[0]],
        ["log2_volume_eps_hi", vol_eps[1]],
        [f"log2_volume_{bound.kind}_lo", vol_bound[0]],
        [f"log2_volume_{bound.kind}_hi", vol_bound[1]],
    ]
    _write_csv(out_dir / "bounds.csv", ["name", "value"], bound_rows)
    return 0 if all_pass else 1


def cmd_sample(section: Section, seed: int, out_dir: Path) -> int:
    strategy = _strategy_from(section)
    dim = section.get_int("dim", 1024)
    draws = section.get_int("draws", 1000)
    try:
        histogram = density_histogram(strategy, dim, draws, SeededRng(seed))
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    rows = [
        [center, int(count)]
        for center, count in zip(histogram.bin_centers, histogram.counts)
    ]
    _write_csv(out_dir / "histogram.csv", ["bin_center", "count"], rows)
    section.resolved["entropy_bits"] = _fmt(histogram.entropy_bits)
    return 0


def cmd_train(section: Section, seed: int, out_dir: Path) -> int:
    strategy = _strategy_from(section)
    corpus_spec = section.get_str("corpus", "synthetic:12x96")
    corpus_seed = section.get_int("corpus_seed", 0)
    corpus = _load_corpus(corpus_spec, corpus_seed)
    resume = section.get_str("resume", None)
    initial = None
    if resume is not None:
        try:
            initial = load_model(resume)
        except FileNotFoundError as exc:
            raise UsageError(f"resume model file not found: {resume}") from exc

    config = TrainConfig(
        strategy=strategy,
        patch_size=section.get_int("patch_size", 40),
        stride=section.get_int("stride", None),
        epochs=section.get_int("epochs", 1),
        batch_size=section.get_int("batch_size", 16),
        learning_rate=section.get_float("learning_rate", 1e-3),
        lr_decay=section.get_float("lr_decay", 1.0),
        optimizer=section.get_str("optimizer", "adam"),
        seed=seed,
        val_fraction=section.get_float("val_fraction", 0.1),
        max_steps=section.get_int("max_steps", None),
    )
    try:
        model, history = train(config, corpus, model=initial)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc

    model_name = section.get_str("model_out", "model.tsdn")
    save_model(model, out_dir / model_name)
    rows = [
        [epoch, loss, val]
        for epoch, (loss, val) in enumerate(zip(history.train_loss, history.val_psnr))
    ]
    _write_csv(out_dir / "history.csv", ["epoch", "train_loss", "val_psnr"], rows)
    return 0


def _attack_config(section: Section, seed: int) -> AttackConfig:
    try:
        return AttackConfig(
            budget_norm=section.get_str("budget_norm", "linf"),
            epsilon=section.get_float("epsilon", 3.0 / 255.0),
            alpha=section.get_float("alpha", 2.0 / 255.0),
            steps=section.get_int("steps", 5),
            random_init=section.get_bool("random_init", False),
            clamp_valid_range=section.get_bool("clamp_valid_range", True),
            seed=seed,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _load_model_file(section: Section, key: str = "model"):
    path = section.get_str(key, _REQUIRED)
    try:
        return load_model(path)
    except FileNotFoundError as exc:
        raise UsageError(f"model file not found: {path}") from exc


def cmd_attack(section: Section, seed: int, out_dir: Path) -> int:
    model = _load_model_file(section)
    sigma = section.get_float("sigma", model.sigma_trained or 25.0 / 255.0)
    corpus = _load_corpus(
        section.get_str("corpus", "synthetic:12x96"), section.get_int("corpus_seed", 0)
    )
    patch = section.get_int("patch_size", 40)
    count = section.get_int("count", 16)
    pairs = _noisy_pairs(_patches(corpus, patch, count), sigma, seed)
    cfg = _attack_config(section, seed)

    rows = attack_suite(model, pairs, cfg)
    csv_rows = []
    drops = []
    for row in rows:
        write_pgm(row.adversarial, out_dir / f"adv_{row.index:04d}.pgm", maxval=65535)
        drop = row.before.psnr - row.after.psnr
        drops.append(drop)
        csv_rows.append(
            [
                row.index,
                cfg.epsilon,
                row.before.psnr,
                row.after.psnr,
                row.before.ssim,
                row.after.ssim,
                row.before.mae,
                row.after.mae,
                drop,
            ]
        )
    csv_rows.append(
        [
            "mean",
            cfg.epsilon,
            float(np.mean([r.before.psnr for r in rows])),
            float(np.mean([r.after.psnr for r in rows])),
            float(np.mean([r.before.ssim for r in rows])),
            float(np.mean([r.after.ssim for r in rows])),
            float(np.mean([r.before.mae for r in rows])),
            float(np.mean([r.after.mae for r in rows])),
            float(np.mean(drops)),
        ]
    )
    _write_csv(
        out_dir / "attack.csv",
        [
            "image",
            "budget",
            "psnr_before",
            "psnr_after",
            "ssim_before",
            "ssim_after",
            "mae_before",
            "mae_after",
            "psnr_drop",
        ],
        csv_rows,
    )
    return 0


def cmd_probe(section: Section, seed: int, out_dir: Path) -> int:
    kind = section.get_str("kind", "radar")
    model = _load_model_file(section)
    sigma = section.get_float("sigma", model.sigma_trained or 25.0 / 255.0)
    corpus = _load_corpus(
        section.get_str("corpus", "synthetic:4x96"), section.get_int("corpus_seed", 0)
    )
    patch = section.get_int("patch_size", 40)
    u = _patches(corpus, patch, 1)[0]
    dim = u.values.size
    root = SeededRng(seed)
    cfg = _attack_config(section, seed)

    def noisy_of(noise: NoiseField) -> PixelGrid:
        return PixelGrid(
            u.height, u.width, np.clip(u.values + noise.values, 0.0, 1.0)
        )

    if kind == "radar":
        n_field = gaussian_noise(dim, sigma, root.child(0))
        adv = denoising_pgd(model, u, noisy_of(n_field), cfg)
        v = adv.values - noisy_of(n_field).values
        grid = radar_probe(
            model,
            u,
            n_field,
            v,
            n_angular=section.get_int("angular", 72),
            n_radial=section.get_int("radial", 10),
        )
        rows = []
        for i in range(grid.n_angular):
            theta = 2.0 * math.pi * i / grid.n_angular
            for j in range(grid.n_radial):
                gamma = j / (grid.n_radial - 1)
                rows.append([theta, gamma, grid.scores[i, j]])
        _write_csv(out_dir / "probe.csv", ["theta", "gamma_or_phi", "score"], rows)
    elif kind == "sphere":
        n1 = gaussian_noise(dim, sigma, root.child(0))
        n2 = gaussian_noise(dim, sigma, root.child(1))
        adv = denoising_pgd(model, u, noisy_of(n1), cfg)
        v1 = adv.values - noisy_of(n1).values
        grid = sphere_probe(
            model,
            u,
            n1,
            (n1, n2, v1),
            n_angular=section.get_int("angular", 72),
            n_elevation=section.get_int("elevation", 10),
            radius=section.get_float("radius", float(np.linalg.norm(v1))),
        )
        rows = []
        for i in range(grid.n_angular):
            theta = 2.0 * math.pi * i / grid.n_angular
            for j in range(grid.n_radial):
                phi = -0.5 * math.pi + math.pi * j / (grid.n_radial - 1)
                rows.append([theta, phi, grid.scores[i, j]])
        _write_csv(out_dir / "probe.csv", ["theta", "gamma_or_phi", "score"], rows)
    elif kind == "blend":
        n1 = gaussian_noise(dim, sigma, root.child(0))
        n2 = gaussian_noise(dim, sigma, root.child(1))
        a1 = denoising_pgd(model, u, noisy_of(n1), cfg)
        a2 = denoising_pgd(model, u, noisy_of(n2), cfg)
        lambdas_text = section.get_str("lambdas", "0.25,0.5,0.75")
        try:
            lambdas = [float(t) for t in lambdas_text.split(",") if t.strip()]
        except ValueError as exc:
            raise UsageError(f"bad lambdas list: {lambdas_text!r}") from exc
        scores = blend_path_scores(model, u, n1, n2, a1, a2, lambdas)
        _write_csv(out_dir / "probe.csv", ["lambda", "score"], [list(s) for s in scores])
    elif kind == "patch":
        n_field = gaussian_noise(dim, sigma, root.child(0))
        region_text = section.get_str("region", _REQUIRED)
        try:
            top, left, height, width = (int(t) for t in region_text.split(","))
        except ValueError as exc:
            raise UsageError(f"bad region '{region_text}' (want top,left,h,w)") from exc
        method = section.get_str("method", "local-craft")
        try:
            result = patch_attack(
                model, u, n_field, (top, left, height, width), method, cfg
            )
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
        noisy = noisy_of(n_field)
        mask = np.zeros((u.height, u.width), dtype=bool)
        mask[top : top + height, left : left + width] = True
        den_noisy = forward(model, noisy).grid()
        den_adv = forward(model, result).grid()
        clean = u.grid()

        def masked_psnr(imgs, keep):
            a, b = imgs
            err = float(np.mean((a[keep] - b[keep]) ** 2))
            return math.inf if err == 0 else 10.0 * math.log10(1.0 / err)

        inside_drop = masked_psnr((den_noisy, clean), mask) - masked_psnr(
            (den_adv, clean), mask
        )
        outside_change = abs(
            masked_psnr((den_noisy, clean), ~mask) - masked_psnr((den_adv, clean), ~mask)
        )
        identical = bool(
            np.array_equal(result.grid()[~mask], noisy.grid()[~mask])
        )
        write_pgm(result, out_dir / "patch_adv.pgm", maxval=65535)
        _write_csv(
            out_dir / "probe.csv",
            ["name", "value"],
            [
                ["inside_psnr_drop", inside_drop],
                ["outside_psnr_change", outside_change],
                ["outside_bit_identical", int(identical)],
            ],
        )
    else:
        raise UsageError(f"unknown probe kind: {kind!r}")
    return 0


def cmd_eval(section: Section, seed: int, out_dir: Path) -> int:
    model = _load_model_file(section)
    model_b = None
    if section.get_str("model_b", None) is not None:
        model_b = _load_model_file(section, "model_b")
    sigma = section.get_float("sigma", model.sigma_trained or 25.0 / 255.0)
    corpus = _load_corpus(
        section.get_str("corpus", "synthetic:12x96"), section.get_int("corpus_seed", 0)
    )
    patch = section.get_int("patch_size", 40)
    count = section.get_int("count", 16)
    pairs = _noisy_pairs(_patches(corpus, patch, count), sigma, seed)
    threshold = section.get_float("transfer_threshold", 0.0)
    cfg = _attack_config(section, seed) if model_b is not None else None

    header = ["image", "psnr_noisy", "psnr_denoised", "ssim_denoised", "mae_denoised"]
    if model_b is not None:
        header.append("transfer")
    rows = []
    transferred = 0
    for index, (clean, noisy) in enumerate(pairs):
        denoised = forward(model, noisy)
        row = [
            index,
            psnr(noisy, clean),
            psnr(denoised, clean),
            ssim(denoised, clean),
            mae(denoised, clean),
        ]
        if model_b is not None:
            adv = run_attack(model, clean, noisy, cfg)
            verdict = transferability_check(model, model_b, clean, noisy, adv, threshold)
            transferred += verdict == "transferable"
            row.append(verdict)
        rows.append(row)
    _write_csv(out_dir / "eval.csv", header, rows)
    if model_b is not None:
        section.resolved["transfer_rate"] = _fmt(transferred / len(pairs))
    return 0


_COMMANDS = {
    "verify": cmd_verify,
    "sample": cmd_sample,
    "train": cmd_train,
    "attack": cmd_attack,
    "probe": cmd_probe,
    "eval": cmd_eval,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="tslab",
        description="Typical-set bounds, sampling defenses, and PGD attacks "
        "for Gaussian denoisers.",
    )
    parser.add_argument("command", choices=sorted(_COMMANDS))
    parser.add_argument("--config", required=True, help="INI config file")
    parser.add_argument("--seed", type=int, default=None, help="override config seed")
    parser.add_argument("--out", default="out", help="output directory")
    args = parser.parse_args(argv)

    try:
        section = _load_section(args.config, args.command)
        seed = args.seed if args.seed is not None else section.get_int("seed", 0)
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        code = _COMMANDS[args.command](section, seed, out_dir)
        manifest = dict(section.resolved)
        manifest["command"] = args.command
        manifest["seed"] = _fmt(seed)
        _write_manifest(out_dir, args.command, manifest)
        return code
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (PgmError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
