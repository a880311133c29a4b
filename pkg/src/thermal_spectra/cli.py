"""Command-line entry point: ``thermal-spectra <command> [--config FILE] [--seed N]
[--out DIR] [--set key=value ...]``.

Commands: ``qvi``, ``qml``, ``lattice``, ``oracle``, ``sample``, ``compare`` and
``run`` (which takes the command from the config file). Exit codes: 0 success,
1 runtime failure (outputs written so far are renamed ``*.partial``), 2 config error.
"""
from __future__ import annotations

import argparse
import copy
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .basis import BasisSet
from .flow import FlowMap
from .hamiltonian import Potential
from .lattice import correlator_from_samples, fit_delta_e, path_correlators
from .oracle import SpectrumResult, reference_spectrum
from .outputs import config_hash, write_csv, write_json
from .qml import QmlConfig, train_qml
from .qvi import QviConfig, train_qvi
from .sampler import (
    ActionConfig,
    SamplerSettings,
    iter_sweeps,
    read_bank,
    sample_open_paths,
    write_bank,
)

log = logging.getLogger("thermal_spectra")

COMMANDS = ("qvi", "qml", "lattice", "oracle", "sample", "compare")


class ConfigError(ValueError):
    pass


_SAMPLER_COMMON = {
    "n_walkers": None,
    "burn_in": 2000,
    "thin": 1,
    "a_stretch": 2.0,
    "moves": "modes",
    "block_size": 4,
}

_FLOW_DEFAULT = {"variant": "paper_sum", "lo": -10.0, "hi": 10.0, "intervals": 400}

_COMMON = {
    "command": None,
    "seed": 0,
    "out": "out",
    "potential": {"kind": "anharmonic", "coeffs": None},
    "plots": False,
    "grid": {"lo": -10.0, "hi": 10.0, "n": 2001},
}

_DEFAULTS = {
    "qvi": {
        "basis": {"family": "fourier", "size": 40, "half_width": 10.0},
        "flow": None,
        "trainer": {
            "temperature": 3.0,
            "n_states": 10,
            "c_perp": 1e3,
            "learning_rate": 1e-3,
            "max_steps": 200_000,
            "convergence_tol": 1e-10,
            "convergence_window": 500,
            "init_noise": 1e-3,
            "log_every": 100,
            "checkpoint_every": 0,
        },
    },
    "qml": {
        "trainer": {
            "family": "mixture",
            "beta": 1.0,
            "n_states": 5,
            "basis_size": 10,
            "c_perp": 1e2,
            "p_perp": 1e-6,
            "batch_size": 500,
            "max_steps": 20_000,
            "learning_rate": 1e-3,
            "flow_learning_rate": 1e-5,
            "flow_variant": "paper_sum",
            "flow_range": [-10.0, 10.0],
            "flow_intervals": 400,
            "init_noise": 1e-3,
            "log_every": 100,
            "checkpoint_every": 0,
        },
        # adjacent retained sweeps are strongly correlated; the bank keeps one sweep in 20
        "sampler": {"n_slices": 32, "n_samples": 1_000_000, "bank": None, "save_bank": False,
                    **{**_SAMPLER_COMMON, "n_walkers": 1000, "burn_in": 500, "thin": 20}},
    },
    "lattice": {
        "sampler": {"beta": 10.0, "n_slices": 160, "n_samples": 2_560_000, **_SAMPLER_COMMON},
        "lattice": {"fit_window": None, "n_blocks": 50},
    },
    "oracle": {
        "oracle": {"big_m": 120, "n_levels": 10, "check_increment": 20},
    },
    "sample": {
        "sampler": {"boundary": "open", "beta": 1.0, "n_slices": 32, "n_samples": 100_000,
                    **_SAMPLER_COMMON},
    },
    "compare": {
        "compare": {"a": None, "b": None, "n_states": None},
    },
}


def default_config(command: str) -> dict:
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}; expected one of {', '.join(COMMANDS)}")
    cfg = copy.deepcopy(_COMMON)
    cfg.update(copy.deepcopy(_DEFAULTS[command]))
    cfg["command"] = command
    return cfg


def _merge(template: dict, given: dict, prefix: str = "") -> dict:
    out = copy.deepcopy(template)
    for key, value in given.items():
        name = f"{prefix}{key}"
        if key not in template:
            raise ConfigError(f"unknown config key {name!r}")
        default = template[key]
        if isinstance(default, dict) and isinstance(value, dict):
            out[key] = _merge(default, value, name + ".")
        elif key == "flow" and not prefix:
            out[key] = None if value is None else _merge(_FLOW_DEFAULT, value, "flow.")
        elif isinstance(default, dict):
            raise ConfigError(f"config key {name!r} must be a mapping")
        else:
            out[key] = value
    return out


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _apply_override(cfg: dict, assignment: str) -> None:
    if "=" not in assignment:
        raise ConfigError(f"override {assignment!r} is not of the form key=value")
    key, text = assignment.split("=", 1)
    parts = key.strip().split(".")
    node = cfg
    for i, part in enumerate(parts[:-1]):
        if part == "flow" and i == 0 and node.get("flow") is None and "flow" in node:
            node["flow"] = dict(_FLOW_DEFAULT)
        if part not in node or not isinstance(node[part], dict):
            raise ConfigError(f"unknown config key {key!r}")
        node = node[part]
    last = parts[-1]
    if last not in node:
        raise ConfigError(f"unknown config key {key!r}")
    value = _parse_value(text)
    if isinstance(node[last], dict) and not isinstance(value, dict):
        raise ConfigError(f"config key {key!r} must be a mapping")
    node[last] = value if not isinstance(node[last], dict) else _merge(node[last], value, key + ".")


@dataclass
class RunConfig:
    command: str
    seed: int = 0
    out: str = "out"
    potential: dict = field(default_factory=dict)
    plots: bool = False
    grid: dict = field(default_factory=dict)
    basis: dict | None = None
    flow: dict | None = None
    trainer: dict | None = None
    sampler: dict | None = None
    lattice: dict | None = None
    oracle: dict | None = None
    compare: dict | None = None

    def to_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}

    @property
    def hash(self) -> str:
        # the output directory does not influence results
        d = self.to_dict()
        d.pop("out", None)
        return config_hash(d)

    # typed views, raising ConfigError on invalid values
    def make_potential(self) -> Potential:
        p = self.potential
        coeffs = p.get("coeffs")
        return Potential(p["kind"], tuple(coeffs) if coeffs is not None else None)

    def make_basis(self) -> BasisSet:
        return BasisSet(self.basis["family"], int(self.basis["size"]), self.basis.get("half_width"))

    def make_flow(self) -> FlowMap | None:
        if self.flow is None:
            return None
        f = self.flow
        return FlowMap.uniform(f["lo"], f["hi"], int(f["intervals"]), f["variant"])

    def make_qvi(self) -> QviConfig:
        return QviConfig(basis=self.make_basis(), flow=self.make_flow(), **self.trainer)

    def make_qml(self) -> QmlConfig:
        t = dict(self.trainer)
        t["flow_range"] = tuple(t["flow_range"])
        return QmlConfig(**t)

    def make_sampler_settings(self) -> SamplerSettings:
        s = self.sampler
        return SamplerSettings(
            n_walkers=s["n_walkers"], burn_in=int(s["burn_in"]), thin=int(s["thin"]),
            a_stretch=float(s["a_stretch"]), moves=s["moves"], block_size=int(s["block_size"]),
        )


def parse_config(
    command: str | None = None,
    path=None,
    overrides=(),
    seed: int | None = None,
    out: str | None = None,
) -> RunConfig:
    """Load a JSON config, fill command defaults, apply ``key=value`` overrides and validate."""
    raw = {}
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text())
        except FileNotFoundError as exc:
            raise ConfigError(f"config file {path} not found") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config file must contain a JSON object")
    cmd = command or raw.get("command")
    if cmd is None:
        raise ConfigError("missing config key 'command'")
    raw = dict(raw)
    raw["command"] = cmd
    merged = _merge(default_config(cmd), raw)
    for assignment in overrides:
        _apply_override(merged, assignment)
    if seed is not None:
        merged["seed"] = seed
    if out is not None:
        merged["out"] = out
    cfg = RunConfig(**merged)
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig) -> None:
    try:
        if not isinstance(cfg.seed, int) or cfg.seed < 0:
            raise ValueError("seed must be a non-negative integer")
        cfg.make_potential()
        g = cfg.grid
        if not (g["hi"] > g["lo"] and int(g["n"]) >= 2):
            raise ValueError("grid needs hi > lo and n >= 2")
        if cfg.command == "qvi":
            cfg.make_qvi()
        elif cfg.command == "qml":
            cfg.make_qml()
            cfg.make_sampler_settings()
        elif cfg.command in ("lattice", "sample"):
            cfg.make_sampler_settings()
            boundary = cfg.sampler.get("boundary", "periodic")
            ActionConfig(cfg.sampler["beta"], int(cfg.sampler["n_slices"]), cfg.make_potential(), boundary)
        elif cfg.command == "compare":
            if cfg.compare["a"] is None or cfg.compare["b"] is None:
                raise ValueError("compare needs compare.a and compare.b (spectrum.json paths)")
    except (ValueError, TypeError, KeyError, OverflowError) as exc:
        raise ConfigError(f"invalid config: {exc}") from exc


# ----------------------------------------------------------------- comparison

def compare(result_a: SpectrumResult, result_b: SpectrumResult, n_states: int | None = None,
            grid=None) -> dict:
    """Per-state fractional gap differences and sign-aligned L2 distances.

    ``frac_gap_diff[n] = |gap_a - gap_b| / |gap_b|`` for ``n >= 1``;
    ``l2[n] = int (psi_a - s psi_b)^2 dx`` with ``s = sign <psi_a, psi_b>``,
    evaluated by the trapezoid rule on a shared uniform grid.
    """
    k = min(len(result_a.eigenvalues), len(result_b.eigenvalues))
    k = k if n_states is None else min(k, n_states)
    if k < 1:
        raise ValueError("results share no states")
    ga, gb = result_a.gaps[:k], result_b.gaps[:k]
    with np.errstate(divide="ignore", invalid="ignore"):
        frac = np.where(gb != 0, np.abs(ga - gb) / np.abs(gb), np.abs(ga - gb))
    report = {
        "n_states": k,
        "gaps_a": ga.tolist(),
        "gaps_b": gb.tolist(),
        "frac_gap_diff": frac[1:].tolist(),
    }
    have_states = all(r.eigenvectors is not None and r.basis is not None for r in (result_a, result_b))
    if have_states:
        x = np.linspace(-10.0, 10.0, 2001) if grid is None else np.asarray(grid, dtype=float)
        wa = result_a.wavefunctions(x, k)
        wb = result_b.wavefunctions(x, k)
        sign = np.where(np.trapezoid(wa * wb, x, axis=1) < 0, -1.0, 1.0)
        diff = wa - sign[:, None] * wb
        report["l2"] = np.trapezoid(diff * diff, x, axis=1).tolist()
        report["sign"] = sign.tolist()
    return report


# -------------------------------------------------------------------- running

class _Outputs:
    """Tracks written files so a failed run can mark them ``.partial``."""

    def __init__(self, out_dir: Path, chash: str):
        self.dir = out_dir
        self.hash = chash
        self.written: list[Path] = []

    def path(self, name: str) -> Path:
        p = self.dir / name
        self.written.append(p)
        return p

    def csv(self, name, header, rows):
        return write_csv(self.path(name), header, rows, self.hash)

    def json(self, name, payload):
        return write_json(self.path(name), payload, self.hash)

    def mark_partial(self):
        for p in self.written:
            if p.exists():
                p.rename(p.with_name(p.name + ".partial"))


def _write_states(outs: _Outputs, cfg: RunConfig, result: SpectrumResult) -> None:
    g = cfg.grid
    x = np.linspace(g["lo"], g["hi"], int(g["n"]))
    psi = result.wavefunctions(x)
    k = psi.shape[0]
    outs.csv("wavefunctions.csv", ["x"] + [f"psi_{n}" for n in range(k)],
             np.column_stack([x, psi.T]))
    a = np.abs(result.eigenvectors)
    outs.csv("coefficients.csv", ["j"] + [f"abs_a_{n}" for n in range(a.shape[1])],
             np.column_stack([np.arange(a.shape[0]), a]))
    if cfg.plots:
        from .plots import coefficient_heatmap, wavefunction_plot

        wavefunction_plot(outs.path("wavefunctions.svg"), x, psi)
        coefficient_heatmap(outs.path("coefficients.svg"), a)


def _write_log(outs: _Outputs, history: list[dict]) -> None:
    if not history:
        outs.csv("training_log.csv", ["step"], [])
        return
    header = list(history[0].keys())
    outs.csv("training_log.csv", header, [[row[h] for h in header] for row in history])


def _spectrum_payload(result: SpectrumResult, cfg: RunConfig) -> dict:
    d = result.to_dict()
    # the output location is recorded in config.json only, so results compare byte for byte
    d["config"] = {k: v for k, v in cfg.to_dict().items() if k != "out"}
    return d


def _run_qvi(cfg: RunConfig, outs: _Outputs) -> None:
    result = train_qvi(cfg.make_qvi(), cfg.make_potential(), cfg.seed,
                       checkpoint_path=outs.dir / "checkpoint.json"
                       if cfg.trainer.get("checkpoint_every") else None)
    outs.json("spectrum.json", _spectrum_payload(result, cfg))
    _write_states(outs, cfg, result)
    _write_log(outs, result.extras["history"])


def _load_or_sample_bank(cfg: RunConfig, outs: _Outputs, beta: float) -> np.ndarray:
    s = cfg.sampler
    if s.get("bank"):
        data, header = read_bank(s["bank"])
        if data.ndim != 2 or data.shape[1] != 2:
            raise ValueError(f"bank {s['bank']} does not hold endpoint pairs")
        hb = header.get("config", {}).get("beta")
        if hb is not None and abs(hb - beta) > 1e-12:
            log.warning("bank beta %s differs from trainer beta %s", hb, beta)
        return data
    acfg = ActionConfig(beta, int(s["n_slices"]), cfg.make_potential(), "open")
    samples = sample_open_paths(acfg, int(s["n_samples"]), seed=cfg.seed,
                                settings=cfg.make_sampler_settings())
    log.info("sampled %d endpoint pairs, acceptance %.3f", len(samples.endpoints),
             samples.acceptance_rate)
    if s.get("save_bank"):
        write_bank(outs.path("endpoints.bin"), samples.endpoints,
                   {"config": acfg.to_dict(), "config_hash": outs.hash, "kind": "endpoints"})
    return samples.endpoints


def _run_qml(cfg: RunConfig, outs: _Outputs) -> None:
    qcfg = cfg.make_qml()
    bank = _load_or_sample_bank(cfg, outs, qcfg.beta)
    result = train_qml(qcfg, cfg.make_potential(), bank, cfg.seed,
                       checkpoint_path=outs.dir / "checkpoint.json"
                       if cfg.trainer.get("checkpoint_every") else None)
    outs.json("spectrum.json", _spectrum_payload(result, cfg))
    _write_states(outs, cfg, result)
    _write_log(outs, result.extras["history"])


def run_lattice(cfg: RunConfig) -> tuple:
    """Stream periodic-path sweeps into per-sweep correlators, then fit."""
    s = cfg.sampler
    acfg = ActionConfig(s["beta"], int(s["n_slices"]), cfg.make_potential(), "periodic")
    settings = cfg.make_sampler_settings()
    n_walkers = settings.n_walkers or 4 * acfg.dim
    settings.n_walkers = n_walkers
    n_sweeps = int(np.ceil(int(s["n_samples"]) / n_walkers))
    rows = []
    ens = None
    for walkers, ens in iter_sweeps(acfg, n_sweeps, cfg.seed, settings):
        rows.append(path_correlators(walkers).mean(axis=0))
    corr = correlator_from_samples(np.array(rows), acfg.beta, int(cfg.lattice["n_blocks"]))
    corr.n_samples = n_sweeps * n_walkers
    window = cfg.lattice["fit_window"]
    fit = fit_delta_e(corr, tuple(window) if window is not None else None)
    return corr, fit, ens.acceptance_rate


def _run_lattice(cfg: RunConfig, outs: _Outputs) -> None:
    corr, fit, acc = run_lattice(cfg)
    outs.csv("correlator.csv", ["tau", "C", "sigma"], corr.to_rows())
    report = fit.to_dict()
    report.update(n_samples=corr.n_samples, acceptance_rate=acc, beta=corr.beta)
    outs.json("fit.json", report)
    result = SpectrumResult(np.array([0.0, fit.delta_e]), method="lattice-gap-only",
                            diagnostics={"delta_e_error": fit.delta_e_error})
    outs.json("spectrum.json", _spectrum_payload(result, cfg))
    if cfg.plots:
        from .plots import correlator_plot

        correlator_plot(outs.path("correlator.svg"), corr, fit)


def _run_oracle(cfg: RunConfig, outs: _Outputs) -> None:
    o = cfg.oracle
    V = cfg.make_potential()
    result = reference_spectrum(V, int(o["big_m"]), int(o["n_levels"]), int(o["check_increment"]))
    outs.json("spectrum.json", _spectrum_payload(result, cfg))
    outs.json("reference.json", {
        "potential": V.to_dict(),
        "big_m": int(o["big_m"]),
        "eigenvalues": result.eigenvalues.tolist(),
        "certification_change": result.diagnostics["certification_change"],
    })
    _write_states(outs, cfg, result)


def _run_sample(cfg: RunConfig, outs: _Outputs) -> None:
    s = cfg.sampler
    acfg = ActionConfig(s["beta"], int(s["n_slices"]), cfg.make_potential(), s["boundary"])
    settings = cfg.make_sampler_settings()
    n_walkers = settings.n_walkers or 4 * acfg.dim
    settings.n_walkers = n_walkers
    if acfg.boundary == "open":
        samples = sample_open_paths(acfg, int(s["n_samples"]), seed=cfg.seed, settings=settings)
        data, kind, acc = samples.endpoints, "endpoints", samples.acceptance_rate
    else:
        out, ens = [], None
        n_sweeps = int(np.ceil(int(s["n_samples"]) / n_walkers))
        for w, ens in iter_sweeps(acfg, n_sweeps, cfg.seed, settings):
            out.append(w)
        data, kind, acc = np.concatenate(out), "periodic_paths", ens.acceptance_rate
    write_bank(outs.path(f"{kind}.bin"), data,
               {"config": acfg.to_dict(), "config_hash": outs.hash, "kind": kind})
    outs.json("sample.json", {"kind": kind, "shape": list(data.shape), "acceptance_rate": acc,
                              "second_moments": np.mean(data * data, axis=0)[:8].tolist()})


def _run_compare(cfg: RunConfig, outs: _Outputs) -> None:
    c = cfg.compare
    a = SpectrumResult.load(c["a"])
    b = SpectrumResult.load(c["b"])
    g = cfg.grid
    report = compare(a, b, c["n_states"], np.linspace(g["lo"], g["hi"], int(g["n"])))
    outs.json("compare.json", report)
    k = report["n_states"]
    frac = [float("nan")] + report["frac_gap_diff"]
    l2 = report.get("l2", [float("nan")] * k)
    outs.csv("compare.csv", ["n", "gap_a", "gap_b", "frac_gap_diff", "l2"],
             [[n, report["gaps_a"][n], report["gaps_b"][n], frac[n], l2[n]] for n in range(k)])


_RUNNERS = {
    "qvi": _run_qvi,
    "qml": _run_qml,
    "lattice": _run_lattice,
    "oracle": _run_oracle,
    "sample": _run_sample,
    "compare": _run_compare,
}


def run(cfg: RunConfig) -> int:
    out_dir = Path(cfg.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    outs = _Outputs(out_dir, cfg.hash)
    try:
        outs.json("config.json", cfg.to_dict())
        _RUNNERS[cfg.command](cfg, outs)
    except Exception as exc:  # any module error is a runtime failure
        log.error("%s failed: %s", cfg.command, exc)
        outs.mark_partial()
        return 1
    return 0


def _limit_threads():
    n = os.environ.get("THERMAL_SPECTRA_THREADS")
    if not n:
        return None
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:
        log.warning("THERMAL_SPECTRA_THREADS set but threadpoolctl is not installed")
        return None
    return threadpool_limits(int(n))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="thermal-spectra", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS + ("run",):
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output directory")
        p.add_argument("--set", dest="overrides", action="append", default=[],
                       metavar="KEY=VALUE", help="override a config key (dotted path)")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    command = None if args.command == "run" else args.command
    try:
        cfg = parse_config(command, args.config, args.overrides, args.seed, args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    _limit_threads()
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
