"""Command-line experiments: single runs, multi-sampler comparisons, presets.

Every run directory gets ``metrics.csv``, particle snapshots, per-particle
trajectories and a flat ``manifest.txt`` of ``key=value`` lines. The
manifest lists the resolved value of every run flag, so

    asvgd replay runs/x/manifest.txt --out runs/x2

reproduces ``metrics.csv`` bit for bit.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .accelerated import AdaptiveRestart, AsvgdConfig, Constant, asvgd_run, check_compatible
from .baselines import BASELINES, BaselineConfig, baseline_run
from .ensemble import InitSpec, NumericalAbort, cholesky_or_raise, write_particles_csv
from .kernels import Bilinear, Gaussian, KernelSpec
from .metrics import MetricRecorder, RunRecord, StepRecord
from .targets import (
    Target,
    double_bananas_target,
    gaussian_target,
    gaussian_target_from_cov,
    log_normalizer,
    quartic_target,
)

log = logging.getLogger("asvgd")

SAMPLERS = ("asvgd",) + BASELINES
TARGETS = ("gaussian", "quartic", "double-bananas", "anisotropic")
EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL = 0, 1, 2

# flags echoed into the manifest, in order; replay feeds them back to parse_cli
RUN_FLAGS = (
    "sampler", "target", "target_mean", "target_cov", "target_precision",
    "kernel", "matrix_a", "sigma", "tau", "eps", "n", "steps", "seed",
    "damping", "beta", "init_mean", "init_cov", "friction", "bilinear_interaction", "trace_lag",
    "gradient_restart", "gaussian_interaction", "snapshot_every",
    "metric_every", "trajectories", "full_trajectories", "quad_points",
)


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class ExperimentSpec:
    sampler: str
    target: Target
    kernel: KernelSpec
    init: InitSpec
    config: AsvgdConfig | BaselineConfig
    out: Path
    snapshot_every: int = 100
    metric_every: int = 10
    trajectories: int = 50
    quad_points: int = 400
    label: str = ""
    # resolved flag values, echoed to the manifest
    settings: dict = field(default_factory=dict, compare=False)

    @property
    def name(self) -> str:
        return self.label or self.sampler


# --- argument parsing -------------------------------------------------------

def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(tok) for tok in text.replace(" ", "").split(",") if tok)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _square(values, name: str) -> np.ndarray:
    d = int(round(np.sqrt(len(values))))
    if d * d != len(values) or d == 0:
        raise UsageError(f"--{name} needs d*d row-major numbers, got {len(values)}")
    return np.array(values, dtype=float).reshape(d, d)


def _positive(kind):
    def parse(text):
        value = kind(text)
        if not value > 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {text}")
        return value
    return parse


def _nonnegative(kind):
    def parse(text):
        value = kind(text)
        if not value >= 0:
            raise argparse.ArgumentTypeError(f"must be nonnegative, got {text}")
        return value
    return parse


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


def _add_run_flags(p: argparse.ArgumentParser, multi: bool = False) -> None:
    if multi:
        p.add_argument("--samplers", required=True, help="comma-separated list from " + ",".join(SAMPLERS))
        p.add_argument("--sampler-tau", action="append", default=[], metavar="NAME=TAU",
                       help="per-sampler step size override, repeatable")
    else:
        p.add_argument("--sampler", required=True, choices=SAMPLERS)
    p.add_argument("--target", required=True, choices=TARGETS)
    p.add_argument("--target-mean", type=_floats)
    p.add_argument("--target-cov", type=_floats, help="row-major covariance of a Gaussian target")
    p.add_argument("--target-precision", type=_floats, help="row-major precision of a Gaussian target")
    p.add_argument("--kernel", choices=("bilinear", "gaussian"), default="gaussian")
    p.add_argument("--matrix-a", type=_floats, help="row-major bilinear kernel matrix, default identity")
    p.add_argument("--sigma", type=_positive(float), default=0.1, help="Gaussian kernel width; sigma^2 divides |x-y|^2/2")
    p.add_argument("--tau", type=_positive(float), default=0.1)
    p.add_argument("--eps", type=_nonnegative(float), default=0.1)
    p.add_argument("--n", type=_positive(int), default=500)
    p.add_argument("--steps", type=_nonnegative(int), default=1000)
    p.add_argument("--seed", type=_nonnegative(int), default=0)
    p.add_argument("--damping", choices=("restart", "constant"), default="restart")
    p.add_argument("--beta", type=float, default=None)
    p.add_argument("--init-mean", type=_floats)
    p.add_argument("--init-cov", type=_floats)
    p.add_argument("--friction", type=_positive(float), default=1.0)
    p.add_argument("--bilinear-interaction", choices=("hamiltonian", "trace"), default="hamiltonian")
    p.add_argument("--trace-lag", choices=("mixed", "current"), default="mixed",
                   help="density-momentum lag in the trace-form bilinear update")
    p.add_argument("--gradient-restart", choices=("energy", "trace", "off"), default="energy")
    p.add_argument("--gaussian-interaction", choices=("full", "half"), default="full")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--snapshot-every", type=_positive(int), default=100)
    p.add_argument("--metric-every", type=_positive(int), default=10)
    p.add_argument("--trajectories", type=_nonnegative(int), default=50,
                   help="number of evenly strided particles to trace")
    p.add_argument("--full-trajectories", action="store_true", help="trace every particle")
    p.add_argument("--quad-points", type=_positive(int), default=400,
                   help="grid points per dimension for numerical log-normalization")


def _build_target(ns: argparse.Namespace, d: int) -> Target:
    if ns.target == "quartic":
        return quartic_target()
    if ns.target == "double-bananas":
        return double_bananas_target()
    if ns.target == "anisotropic":
        mean = ns.target_mean or (1.0, 1.0)
        cov = ns.target_cov or (10.0, 0.0, 0.0, 0.05)
        return gaussian_target_from_cov(_square(cov, "target-cov"), mean, name="anisotropic")
    if ns.target_cov and ns.target_precision:
        raise UsageError("give at most one of --target-cov and --target-precision")
    mean = np.array(ns.target_mean if ns.target_mean else (0.0,) * d)
    if ns.target_precision:
        return gaussian_target(_square(ns.target_precision, "target-precision"), mean)
    if ns.target_cov:
        return gaussian_target_from_cov(_square(ns.target_cov, "target-cov"), mean)
    return gaussian_target(np.eye(mean.shape[0]), mean)


def _spec_from_namespace(ns: argparse.Namespace, sampler: str, tau: float, label: str = "") -> ExperimentSpec:
    d = 2
    if ns.init_mean:
        d = len(ns.init_mean)
    elif ns.target_mean:
        d = len(ns.target_mean)
    try:
        target = _build_target(ns, d)
        d = target.dim
        init = InitSpec(
            mean=np.array(ns.init_mean) if ns.init_mean else np.zeros(d),
            covariance=_square(ns.init_cov, "init-cov") if ns.init_cov else np.eye(d),
            count=ns.n,
            seed=ns.seed,
        )
        cholesky_or_raise(init.covariance, "init covariance")
        if ns.kernel == "bilinear":
            kernel = Bilinear(_square(ns.matrix_a, "matrix-a") if ns.matrix_a else np.eye(d))
        else:
            kernel = Gaussian.from_sigma(ns.sigma)
        if ns.damping == "constant":
            if ns.beta is None:
                raise UsageError("--damping constant requires --beta")
            damping = Constant(ns.beta)
        else:
            damping = AdaptiveRestart()
        if sampler == "asvgd":
            check_compatible(kernel, target, init)
            config = AsvgdConfig(
                tau=tau, eps=ns.eps, kernel=kernel, damping=damping, steps=ns.steps,
                bilinear_interaction=ns.bilinear_interaction, bilinear_trace_lag=ns.trace_lag, gradient_restart=ns.gradient_restart,
                gaussian_interaction=ns.gaussian_interaction,
            )
        else:
            if sampler == "svgd":
                check_compatible(kernel, target, init)
            config = BaselineConfig(tau=tau, steps=ns.steps, kernel=kernel, friction=ns.friction, seed=ns.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None

    settings = {key: getattr(ns, key) for key in RUN_FLAGS if hasattr(ns, key)}
    settings["sampler"] = sampler
    settings["tau"] = tau
    return ExperimentSpec(
        sampler=sampler,
        target=target,
        kernel=kernel,
        init=init,
        config=config,
        out=ns.out,
        snapshot_every=ns.snapshot_every,
        metric_every=ns.metric_every,
        trajectories=ns.n if ns.full_trajectories else min(ns.trajectories, ns.n),
        quad_points=ns.quad_points,
        label=label,
        settings=settings,
    )


def parse_cli(argv: list[str]) -> ExperimentSpec:
    """Parse single-run flags into an ExperimentSpec. Raises UsageError."""
    p = _Parser(prog="asvgd run", description="Run one sampler on one target.")
    _add_run_flags(p)
    ns = p.parse_args(argv)
    return _spec_from_namespace(ns, ns.sampler, ns.tau)


def parse_compare_cli(argv: list[str]) -> list[ExperimentSpec]:
    p = _Parser(prog="asvgd compare", description="Run several samplers from a shared initial ensemble.")
    _add_run_flags(p, multi=True)
    ns = p.parse_args(argv)
    names = [s for s in ns.samplers.split(",") if s]
    unknown = sorted(set(names) - set(SAMPLERS))
    if not names or unknown:
        raise UsageError(f"--samplers: unknown or empty sampler list {unknown or names}")
    overrides = {}
    for item in ns.sampler_tau:
        name, _, value = item.partition("=")
        try:
            overrides[name] = float(value)
        except ValueError:
            raise UsageError(f"--sampler-tau expects NAME=TAU, got {item!r}") from None
        if not overrides[name] > 0:
            raise UsageError(f"--sampler-tau {item!r}: step size must be positive")
    return [
        _spec_from_namespace(ns, name, overrides.get(name, ns.tau), label=_unique_label(names, i))
        for i, name in enumerate(names)
    ]


def _unique_label(names: list[str], i: int) -> str:
    name = names[i]
    seen = names[:i].count(name)
    return name if seen == 0 else f"{name}#{seen + 1}"


# --- manifest ---------------------------------------------------------------

def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (tuple, list)):
        return ",".join(_format_value(float(v)) for v in value)
    return str(value)


def write_manifest(spec: ExperimentSpec, path: Path, extra: dict | None = None) -> None:
    lines = []
    for key in RUN_FLAGS:
        value = spec.settings.get(key)
        if value is None:
            continue
        lines.append(f"{key}={_format_value(value)}")
    # resolved values that have no flag of their own
    resolved = {
        "resolved.kernel_sigma2": spec.kernel.sigma2 if isinstance(spec.kernel, Gaussian) else None,
        "resolved.target_name": spec.target.name,
        "resolved.init_mean": spec.init.mean.tolist(),
        "resolved.init_cov": spec.init.covariance.ravel().tolist(),
        "resolved.noise_stream": "numpy.default_rng([seed, 1])" if spec.sampler in ("ula", "mala", "uld") else None,
        "resolved.init_stream": "numpy.default_rng(seed).standard_normal((n, d))",
    }
    resolved.update(extra or {})
    for key, value in resolved.items():
        if value is not None:
            lines.append(f"{key}={_format_value(value)}")
    path.write_text("\n".join(lines) + "\n")


def read_manifest(path: Path) -> list[str]:
    """Turn a manifest back into ``asvgd run`` arguments (without ``--out``)."""
    argv = []
    for raw in Path(path).read_text().splitlines():
        if not raw.strip() or raw.startswith("#"):
            continue
        key, sep, value = raw.partition("=")
        if not sep:
            raise UsageError(f"{path}: malformed manifest line {raw!r}")
        if key.startswith("resolved.") or key not in RUN_FLAGS:
            continue
        flag = "--" + key.replace("_", "-")
        if value in ("true", "false"):
            if value == "true":
                argv.append(flag)
            continue
        argv.append(f"{flag}={value}")
    return argv


# --- running ----------------------------------------------------------------

class SnapshotWriter:
    def __init__(self, out: Path, every: int, final_step: int):
        self.out = out
        self.every = every
        self.final_step = final_step

    def __call__(self, e, info) -> None:
        k = e.step_index
        if k == 0:
            write_particles_csv(self.out / "particles_init.csv", e.positions)
        if k % self.every == 0 or k == self.final_step:
            write_particles_csv(self.out / f"particles_{k}.csv", e.positions)
        if k == self.final_step:
            write_particles_csv(self.out / "particles_final.csv", e.positions)


class TrajectoryRecorder:
    def __init__(self, n: int, count: int):
        count = min(count, n)
        self.indices = np.arange(count) * (n // count) if count else np.array([], int)
        self.rows: list[np.ndarray] = []
        self.steps: list[int] = []

    def __call__(self, e, info) -> None:
        if self.indices.size:
            self.steps.append(e.step_index)
            self.rows.append(e.positions[self.indices].copy())

    def write(self, out: Path) -> None:
        if not self.indices.size:
            return
        stacked = np.stack(self.rows, axis=1)  # (particles, steps, d)
        d = stacked.shape[2]
        steps = np.array(self.steps, dtype=float)[:, None]
        for idx, traj in zip(self.indices, stacked):
            header = "step," + ",".join(f"x{j}" for j in range(d))
            np.savetxt(out / f"trajectory_{idx}.csv", np.hstack([steps, traj]),
                       fmt=["%d"] + ["%.17g"] * d, delimiter=",", header=header, comments="")


def write_metrics_csv(path: Path, records: list[StepRecord], d: int) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "kl"] + [f"mean_{j}" for j in range(d)] + ["cov_trace", "restart_fraction", "alpha_mean"])
        for r in records:
            w.writerow(
                [r.step, repr(r.kl_estimate)]
                + [repr(float(m)) for m in r.mean]
                + [repr(r.cov_trace), repr(r.restart_fraction), repr(r.alpha_mean)]
            )


def execute(spec: ExperimentSpec) -> RunRecord:
    """Run the sampler with all output hooks attached and write every file."""
    out = spec.out
    out.mkdir(parents=True, exist_ok=True)
    log_z = log_normalizer(spec.target, spec.quad_points)
    steps = spec.config.steps
    metrics = MetricRecorder(spec.target, log_z, spec.metric_every, final_step=steps)
    snapshots = SnapshotWriter(out, spec.snapshot_every, steps)
    trajectories = TrajectoryRecorder(spec.init.count, spec.trajectories)
    write_manifest(spec, out / "manifest.txt", {"resolved.log_z": log_z})
    hooks = [metrics, snapshots, trajectories]
    log.info("running %s on %s: N=%d, %d steps -> %s", spec.name, spec.target.name, spec.init.count, steps, out)
    try:
        if spec.sampler == "asvgd":
            record = asvgd_run(spec.config, spec.target, spec.init, hooks)
        else:
            record = baseline_run(spec.sampler, spec.config, spec.target, spec.init, hooks)
    finally:
        # partial output is still useful after a numerical abort
        write_metrics_csv(out / "metrics.csv", metrics.records, spec.init.dim)
        trajectories.write(out)
    return record


def run_experiment(spec: ExperimentSpec) -> int:
    try:
        execute(spec)
    except NumericalAbort as exc:
        log.error("%s aborted: %s", spec.name, exc)
        return EXIT_NUMERICAL
    except OSError as exc:
        log.error("I/O failure at %s: %s", getattr(exc, "filename", None) or spec.out, exc.strerror or exc)
        return EXIT_USAGE
    return EXIT_OK


def compare(specs: list[ExperimentSpec], seed: int | None = None, out: Path | None = None) -> int:
    """Run every spec from the same initial ensemble and tabulate KL curves.

    Each sampler writes its own run directory ``out/<label>``; the
    combined table is ``out/kl_compare.csv``.
    """
    if not specs:
        raise UsageError("compare needs at least one experiment")
    first = specs[0]
    for s in specs[1:]:
        if s.target.name != first.target.name or s.init.count != first.init.count:
            raise UsageError(
                f"compare requires a shared target and particle count: "
                f"{first.name} uses {first.target.name}/N={first.init.count}, "
                f"{s.name} uses {s.target.name}/N={s.init.count}"
            )
        if s.metric_every != first.metric_every or s.config.steps != first.config.steps:
            raise UsageError("compare requires identical --steps and --metric-every")
    out = Path(out) if out is not None else first.out
    seed = first.init.seed if seed is None else seed
    columns: dict[str, list[float]] = {}
    steps: list[int] = []
    status = EXIT_OK
    for s in specs:
        shared = replace(s, init=replace(s.init, seed=seed), out=out / s.name)
        if isinstance(shared.config, BaselineConfig):
            shared = replace(shared, config=replace(shared.config, seed=seed))
        shared.settings["seed"] = seed
        try:
            record = execute(shared)
        except NumericalAbort as exc:
            log.error("%s aborted: %s", s.name, exc)
            status = EXIT_NUMERICAL
            continue
        steps = [r.step for r in record.records]
        columns[s.name] = [r.kl_estimate for r in record.records]
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "kl_compare.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step"] + list(columns))
        for i, k in enumerate(steps):
            w.writerow([k] + [repr(col[i]) for col in columns.values()])
    return status


# --- presets ----------------------------------------------------------------

PRESETS = {
    "fig1": dict(
        target="gaussian", target_precision="3,-2,-2,3", init_mean="1,1", init_cov="3,2,2,3",
        kernel="bilinear", samplers="asvgd,svgd,mala,uld",
        # bilinear ASVGD is unstable at tau = 0.1 on this target for most seeds
        sampler_tau="asvgd=0.05",
    ),
    "fig2-quartic": dict(target="quartic", init_mean="0,5", init_cov="1,0,0,1", samplers="asvgd,svgd,mala,uld"),
    "fig2-bananas": dict(
        target="double-bananas", init_mean="0,7", init_cov="1,0,0,1", damping="constant", beta="0.985",
        samplers="asvgd,svgd,mala,uld",
    ),
    "fig2-anisotropic": dict(target="anisotropic", init_mean="0,0", init_cov="1,0,0,1", samplers="asvgd,svgd,mala,uld"),
    "fig2-anisotropic-ula": dict(target="anisotropic", init_mean="0,0", init_cov="1,0,0,1", samplers="asvgd,svgd,ula"),
}


def preset_argv(name: str, out: Path, extra: list[str] = ()) -> list[str]:
    if name not in PRESETS:
        raise UsageError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    argv = []
    for key, value in PRESETS[name].items():
        argv.append(f"--{key.replace('_', '-')}={value}")
    return argv + ["--out", str(out)] + list(extra)


# --- entry point ------------------------------------------------------------

def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    commands = ("run", "compare", "preset", "replay")
    if not argv or argv[0] in ("-h", "--help") or argv[0] not in commands:
        print(f"usage: asvgd {{{','.join(commands)}}} [options]   (asvgd <command> --help for details)",
              file=sys.stderr if argv and argv[0] not in ("-h", "--help") else sys.stdout)
        return EXIT_OK if argv and argv[0] in ("-h", "--help") else EXIT_USAGE
    command, rest = argv[0], argv[1:]
    try:
        if command == "run":
            return run_experiment(parse_cli(rest))
        if command == "compare":
            return compare(parse_compare_cli(rest))
        if command == "preset":
            p = _Parser(prog="asvgd preset")
            p.add_argument("name", choices=sorted(PRESETS))
            p.add_argument("--out", type=Path, required=True)
            ns, extra = p.parse_known_args(rest)
            return compare(parse_compare_cli(preset_argv(ns.name, ns.out, extra)))
        p = _Parser(prog="asvgd replay")
        p.add_argument("manifest", type=Path)
        p.add_argument("--out", type=Path, required=True)
        ns = p.parse_args(rest)
        return run_experiment(parse_cli(read_manifest(ns.manifest) + ["--out", str(ns.out)]))
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help inside a subcommand
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    except OSError as exc:
        print(f"I/O failure at {exc.filename}: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_USAGE
