"""Command-line front end.

Every subcommand reads an optional JSON config (``--config``) and lets flags
override it; defaults fill whatever neither provides.  Results go to stdout
as JSON, except ``montecarlo`` which writes CSV/JSON files to ``--out``.

File formats
------------
draws.csv
    one row per simulated dataset.
summary.csv
    one row per (scenario, statistic).
matching-pattern CSV (input of ``estimate``)
    columns ``x,y,count`` with 1-based types; ``y = 0`` rows are single men
    of type x and ``x = 0`` rows single women of type y.

Each CSV gets a ``<name>.meta.json`` sidecar recording the config hash and
master seed along with the tool version.  Floats are written with 17 significant
digits and missing values as empty fields.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import math
import sys
from pathlib import Path
from typing import Annotated, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, NonNegativeInt, PositiveInt, TypeAdapter, ValidationError

from . import __version__
from .assignment import solve_assignment, type_level_duals
from .core import Margins, MatchingPatterns, aggregate_matching
from .estimation import MinDistanceSpec, min_distance, phi0_avar, phi0_avar_equal_types, phi_closed_form, phi_covariance
from .exceptions import TUMatchError
from .ipfp import choo_siow_residual, choo_siow_utilities, ipfp_solve
from .montecarlo import CELLS, ScenarioConfig, run_grid, table1_grid
from .stochastic import NoiseSpec, build_finite_market
from .tinbergen import QuadraticSpec, estimate_affine_map, simulate_quadratic_market

log = logging.getLogger(__name__)

DRAW_COLUMNS = (
    ["scenario_id", "draw", "seed", "r2", "modularity", "margins"]
    + [f"phi{c}" for c in CELLS]
    + ["d2"]
    + [f"share{c}" for c in CELLS]
    + [f"mu{c}" for c in CELLS]
    + ["mu10", "mu20", "mu01", "mu02", "lp_objective", "degenerate"]
)
SUMMARY_COLUMNS = ["scenario_id", "statistic", "mean", "sd", "q05", "q25", "q50", "q75", "q95", "bias", "n_degenerate"]

Probability = Annotated[float, Field(ge=0.0, le=1.0)]
NoiseModel = Literal["separable", "missing_shock", "missing_interaction"]


class ConfigError(TUMatchError, ValueError):
    """Invalid run configuration; ``problems`` lists ``(key_path, message)``."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(f"{path or '<root>'}: {msg}" for path, msg in self.problems))


class _Config(BaseModel):
    model_config = ConfigDict(extra="forbid")


class IpfpConfig(_Config):
    command: Literal["ipfp"]
    phi: list[list[float]]
    n: list[Annotated[float, Field(gt=0)]]
    m: list[Annotated[float, Field(gt=0)]]
    tol: Annotated[float, Field(gt=0)] = 1e-10
    max_iter: PositiveInt = 100_000


class SolveConfig(_Config):
    command: Literal["solve"]
    phi: list[list[float]]
    n: list[NonNegativeInt]
    m: list[NonNegativeInt]
    model: NoiseModel = "separable"
    r2: Probability = 0.0
    interaction_dim: PositiveInt = 1
    nu_dist: Literal["gumbel", "logistic"] = "gumbel"
    scale_singles: bool = True
    seed: NonNegativeInt = 0
    duals: Literal["midpoint", "men", "women"] = "midpoint"


class ScenarioEntry(_Config):
    population: PositiveInt
    margins_kind: Literal["symmetric", "asymmetric"]
    modularity: Literal["small", "large"]
    r2: Probability
    model: NoiseModel = "missing_shock"
    n_draws: PositiveInt = 100
    master_seed: NonNegativeInt = 0
    nu_dist: Literal["gumbel", "logistic"] = "gumbel"
    scale_singles: bool = True
    interaction_dim: PositiveInt = 1


class MonteCarloConfig(_Config):
    command: Literal["montecarlo"]
    grid: Optional[Literal["table1"]] = "table1"
    population: PositiveInt = 200
    draws: PositiveInt = 100
    seed: NonNegativeInt = 0
    model: NoiseModel = "missing_shock"
    nu_dist: Literal["gumbel", "logistic"] = "gumbel"
    scale_singles: bool = True
    scenarios: Optional[list[ScenarioEntry]] = None
    out: str = "mc_out"
    workers: Optional[PositiveInt] = None

    def scenario_configs(self) -> list[ScenarioConfig]:
        if self.scenarios:
            return [ScenarioConfig(**s.model_dump()) for s in self.scenarios]
        return table1_grid(
            self.population, self.draws, self.seed,
            model=self.model, nu_dist=self.nu_dist, scale_singles=self.scale_singles,
        )


class VarianceConfig(_Config):
    command: Literal["variance"]
    mu: Annotated[list[Annotated[float, Field(gt=0, lt=1)]], Field(min_length=4, max_length=4)]
    n: PositiveInt
    d0: Optional[Annotated[float, Field(gt=0, lt=1)]] = None


class TinbergenConfig(_Config):
    command: Literal["tinbergen"]
    A: list[list[float]]
    sigma_x: Optional[list[list[float]]] = None
    sigma_y: Optional[list[list[float]]] = None
    N: PositiveInt = 1000
    observed_dims: PositiveInt = 1
    seed: NonNegativeInt = 0


class EstimateConfig(_Config):
    command: Literal["estimate"]
    data: str
    basis: Optional[list[list[list[float]]]] = None
    weight: Literal["identity", "optimal"] = "optimal"
    sample_size: Optional[PositiveInt] = None


RunConfig = Annotated[
    Union[IpfpConfig, SolveConfig, MonteCarloConfig, VarianceConfig, TinbergenConfig, EstimateConfig],
    Field(discriminator="command"),
]
_ADAPTER = TypeAdapter(RunConfig)


def validate_config(raw: dict):
    """Validate a config mapping; raises :class:`ConfigError` naming each offending key."""
    if not isinstance(raw, dict):
        raise ConfigError([("", "config must be a JSON object")])
    try:
        config = _ADAPTER.validate_python(raw)
    except ValidationError as exc:
        problems = []
        for err in exc.errors():
            loc = list(err["loc"])
            if loc and loc[0] == raw.get("command"):
                loc = loc[1:]
            problems.append((".".join(str(p) for p in loc), err["msg"]))
        raise ConfigError(problems) from None
    if isinstance(config, MonteCarloConfig):
        try:
            config.scenario_configs()
        except TUMatchError as exc:
            raise ConfigError([("population" if not config.scenarios else "scenarios", str(exc))]) from None
    return config


def parse_config(path) -> Union[IpfpConfig, SolveConfig, MonteCarloConfig, VarianceConfig, TinbergenConfig, EstimateConfig]:
    """Load and validate a JSON run configuration."""
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError([("", f"config file {path} not found")]) from None
    except json.JSONDecodeError as exc:
        raise ConfigError([("", f"malformed JSON at line {exc.lineno} column {exc.colno}: {exc.msg}")]) from None
    return validate_config(raw)


def config_hash(config) -> str:
    # output location and parallelism do not affect results
    canonical = json.dumps(config.model_dump(mode="json", exclude={"out", "workers"}), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return "" if not math.isfinite(value) else format(float(value), ".17g")
    return str(value)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        return float(obj) if math.isfinite(obj) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _dumps(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=False)


def _patterns_json(mu: MatchingPatterns) -> dict:
    return {"mu": mu.mu, "mu_x0": mu.mu_x0, "mu_0y": mu.mu_0y}


def draw_rows(config: ScenarioConfig, draws) -> list[list[str]]:
    rows = []
    for d in draws:
        stats = d.statistics()
        row = [d.scenario_id, d.draw, d.seed, d.r2, config.modularity, config.margins_kind]
        row += [stats[c] for c in DRAW_COLUMNS[6:-1]] + [d.degenerate]
        rows.append([_fmt(v) for v in row])
    return rows


def summary_rows(summary) -> list[list[str]]:
    rows = []
    for name, st in summary.stats.items():
        row = [summary.scenario_id, name, st.mean, st.sd, *st.quantiles, st.bias, summary.n_degenerate]
        rows.append([_fmt(v) for v in row])
    return rows


def _write_csv(path: Path, header, rows, meta: dict) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(header)
    writer.writerows(rows)
    path.write_text(buf.getvalue(), newline="")
    sidecar = {**meta, "file": path.name, "columns": list(header)}
    Path(f"{path}.meta.json").write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")


def read_matching_csv(path) -> MatchingPatterns:
    """Read matching patterns from an ``x,y,count`` CSV (see module docstring)."""
    entries = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or {"x", "y", "count"} - set(reader.fieldnames):
            raise ConfigError([("data", "matching CSV needs columns x, y, count")])
        for lineno, row in enumerate(reader, start=2):
            try:
                x, y, count = int(row["x"]), int(row["y"]), float(row["count"])
            except (TypeError, ValueError):
                raise ConfigError([("data", f"line {lineno}: cannot parse {row}")]) from None
            if x < 0 or y < 0 or (x == 0 and y == 0) or count < 0:
                raise ConfigError([("data", f"line {lineno}: invalid cell ({x}, {y}, {count})")])
            entries.append((x, y, count))
    if not entries:
        raise ConfigError([("data", "matching CSV has no rows")])
    X = max(x for x, _, _ in entries)
    Y = max(y for _, y, _ in entries)
    if X == 0 or Y == 0:
        raise ConfigError([("data", "matching CSV has no couples")])
    mu, mu_x0, mu_0y = np.zeros((X, Y)), np.zeros(X), np.zeros(Y)
    for x, y, count in entries:
        if y == 0:
            mu_x0[x - 1] += count
        elif x == 0:
            mu_0y[y - 1] += count
        else:
            mu[x - 1, y - 1] += count
    return MatchingPatterns(mu, mu_x0, mu_0y)


def write_matching_csv(mu: MatchingPatterns, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\r\n")
        writer.writerow(["x", "y", "count"])
        for (x, y), c in np.ndenumerate(mu.mu):
            writer.writerow([x + 1, y + 1, _fmt(float(c))])
        for x, c in enumerate(mu.mu_x0):
            writer.writerow([x + 1, 0, _fmt(float(c))])
        for y, c in enumerate(mu.mu_0y):
            writer.writerow([0, y + 1, _fmt(float(c))])


# -- subcommands ---------------------------------------------------------------


def cmd_ipfp(cfg: IpfpConfig, out) -> None:
    margins = Margins(cfg.n, cfg.m)
    mu = ipfp_solve(np.array(cfg.phi), margins, cfg.tol, cfg.max_iter)
    U, V = choo_siow_utilities(mu)
    out.write(_dumps({**_patterns_json(mu), "U": U, "V": V,
                      "residual": choo_siow_residual(np.array(cfg.phi), mu, margins)}) + "\n")


def cmd_solve(cfg: SolveConfig, out) -> None:
    spec = NoiseSpec(cfg.model, cfg.r2, cfg.interaction_dim, cfg.nu_dist, cfg.scale_singles)
    market = build_finite_market(np.array(cfg.phi), Margins(cfg.n, cfg.m), spec, cfg.seed)
    matching = solve_assignment(market, duals=cfg.duals)
    counts = aggregate_matching(matching.matches, market, market.space, matching.single_men, matching.single_women)
    duals = type_level_duals(matching, market)
    out.write(_dumps({
        "seed": cfg.seed,
        "objective": matching.objective,
        "n_couples": len(matching.matches),
        **_patterns_json(counts),
        "u_bar": duals.u_bar,
        "v_bar": duals.v_bar,
        "shares": duals.shares,
    }) + "\n")


def cmd_montecarlo(cfg: MonteCarloConfig, out) -> None:
    outdir = Path(cfg.out)
    outdir.mkdir(parents=True, exist_ok=True)
    results = run_grid(cfg.scenario_configs(), cfg.workers)
    meta = {"config_hash": config_hash(cfg), "seed": cfg.seed, "tool_version": __version__}
    d_rows, s_rows, report = [], [], []
    for config, draws, summary in results:
        d_rows += draw_rows(config, draws)
        if summary is None:
            continue
        s_rows += summary_rows(summary)
        report.append({
            "scenario_id": summary.scenario_id,
            "n_draws": summary.n_draws,
            "n_degenerate": summary.n_degenerate,
            "n_errors": summary.n_errors,
            "benchmark": summary.benchmark_label,
            "ipfp_mu": _patterns_json(summary.ipfp_mu),
            "ipfp_gap": summary.ipfp_gap,
            "benchmark_shares": summary.benchmark_shares,
            "mean_cell_matches": summary.mean_cell_matches,
            "stats": {k: v.as_dict() for k, v in summary.stats.items()},
        })
        d2 = summary.stats["d2"]
        out.write(f"{summary.scenario_id}: d2 mean {d2.mean:.4f} (n={d2.n}), "
                  f"degenerate {summary.n_degenerate}/{summary.n_draws}, ipfp gap {summary.ipfp_gap:.4f}\n")
    _write_csv(outdir / "draws.csv", DRAW_COLUMNS, d_rows, meta)
    _write_csv(outdir / "summary.csv", SUMMARY_COLUMNS, s_rows, meta)
    (outdir / "summary.json").write_text(_dumps({"meta": meta, "scenarios": report}) + "\n")


def cmd_variance(cfg: VarianceConfig, out) -> None:
    mu4 = np.array(cfg.mu).reshape(2, 2)
    variance, floor = phi0_avar(mu4, cfg.n)
    result = {"variance": variance, "floor": floor, "std_error": math.sqrt(variance)}
    if cfg.d0 is not None:
        result["equal_types_variance"] = phi0_avar_equal_types(cfg.d0, cfg.n)
    out.write(_dumps(result) + "\n")


def cmd_tinbergen(cfg: TinbergenConfig, out) -> None:
    A = np.array(cfg.A)
    eye = np.eye(A.shape[0])
    spec = QuadraticSpec(A, cfg.sigma_x if cfg.sigma_x is not None else eye,
                         cfg.sigma_y if cfg.sigma_y is not None else eye, cfg.N, cfg.observed_dims)
    pairs = simulate_quadratic_market(spec, cfg.seed)
    full = estimate_affine_map(pairs, spec.dim)
    observed = estimate_affine_map(pairs, spec.observed_dims)
    out.write(_dumps({
        "N": cfg.N,
        "seed": cfg.seed,
        "T_hat_full": full.T_hat,
        "T_hat_observed": observed.T_hat,
        "residual_cov_observed": observed.residual_cov,
    }) + "\n")


def cmd_estimate(cfg: EstimateConfig, out) -> None:
    mu = read_matching_csv(cfg.data)
    sample_size = cfg.sample_size or int(round(mu.n_households))
    result = {"phi_hat": phi_closed_form(mu), "sample_size": sample_size}
    cov = phi_covariance(mu, sample_size)
    result["phi_std_errors"] = np.sqrt(np.diag(cov)).reshape(mu.mu.shape)
    if cfg.basis is not None:
        md = min_distance(MinDistanceSpec([np.array(b) for b in cfg.basis], cfg.weight), mu, sample_size)
        result.update({"beta_hat": md.beta_hat, "std_errors": md.std_errors, "cov_beta": md.cov_beta,
                       "j_stat": md.j_stat, "df": md.df, "p_value": md.p_value})
    out.write(_dumps(result) + "\n")


COMMANDS = {
    "ipfp": cmd_ipfp,
    "solve": cmd_solve,
    "montecarlo": cmd_montecarlo,
    "variance": cmd_variance,
    "tinbergen": cmd_tinbergen,
    "estimate": cmd_estimate,
}


def _floats(text: str) -> list[float]:
    return [float(t) for t in text.split(",") if t.strip()]


def _ints(text: str) -> list[int]:
    return [int(t) for t in text.split(",") if t.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tumatch", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", help="JSON config; flags given on the command line take precedence")
        return p

    p = add("ipfp", "large-market logit equilibrium")
    p.add_argument("--phi", type=json.loads, help="surplus matrix as JSON")
    p.add_argument("--n", type=_floats, help="men per type, comma separated")
    p.add_argument("--m", type=_floats, help="women per type, comma separated")
    p.add_argument("--tol", type=float)
    p.add_argument("--max-iter", dest="max_iter", type=int)

    p = add("solve", "one finite market from a seed")
    p.add_argument("--phi", type=json.loads)
    p.add_argument("--n", type=_ints)
    p.add_argument("--m", type=_ints)
    p.add_argument("--model", choices=["separable", "missing_shock", "missing_interaction"])
    p.add_argument("--r2", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--duals", choices=["midpoint", "men", "women"])

    p = add("montecarlo", "Monte Carlo grid runner")
    p.add_argument("--grid", choices=["table1"])
    p.add_argument("--population", type=int)
    p.add_argument("--draws", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--model", choices=["separable", "missing_shock", "missing_interaction"])
    p.add_argument("--nu-dist", dest="nu_dist", choices=["gumbel", "logistic"])
    p.add_argument("--unscaled-singles", dest="scale_singles", action="store_const", const=False)
    p.add_argument("--full", action="store_true", help="population 1000 and 1000 draws per scenario")
    p.add_argument("--out")
    p.add_argument("--workers", type=int)

    p = add("variance", "asymptotic variance of the 2x2 log-odds-ratio estimator")
    p.add_argument("--mu", type=_floats, help="mu11,mu12,mu21,mu22 proportions")
    p.add_argument("--n", type=int, help="number of couples")
    p.add_argument("--d0", type=float, help="share of x = y couples (equal-types formula)")

    p = add("tinbergen", "quadratic-Gaussian omitted-dimension experiment")
    p.add_argument("--A", type=json.loads)
    p.add_argument("--N", type=int)
    p.add_argument("--observed-dims", dest="observed_dims", type=int)
    p.add_argument("--seed", type=int)

    p = add("estimate", "surplus estimates from a matching-pattern CSV")
    p.add_argument("--data")
    p.add_argument("--basis", type=json.loads, help="list of basis matrices as JSON")
    p.add_argument("--weight", choices=["identity", "optimal"])
    p.add_argument("--sample-size", dest="sample_size", type=int)
    return parser


def run_cli(argv=None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    flags = {k: v for k, v in vars(args).items() if v is not None and k not in ("config", "verbose", "command", "full")}
    try:
        raw = {}
        if args.config:
            raw = json.loads(Path(args.config).read_text())
            if raw.get("command", args.command) != args.command:
                raise ConfigError([("command", f"config is for {raw.get('command')!r}, not {args.command!r}")])
        if getattr(args, "full", False):
            raw.update(population=1000, draws=1000)
        raw.update(flags)
        raw["command"] = args.command
        config = validate_config(raw)
        COMMANDS[args.command](config, out)
    except json.JSONDecodeError as exc:
        print(f"error: malformed JSON: {exc}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        for path, msg in exc.problems:
            print(f"error: {path or '<root>'}: {msg}", file=sys.stderr)
        return 2
    except (TUMatchError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
