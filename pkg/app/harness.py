"""Experiment runs behind the CLI: seeded extraction trials, region reports, figures and the worked examples."""
import json
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from app.config import settings
from app.errors import AssertionFailure, ConfigurationError, SamplingError
from app.extraction import (
    classification_agreement,
    extract_cf_differentiable,
    extract_cf_nondifferentiable,
    extract_rcf_differentiable,
    extract_rcf_nondifferentiable,
    hyperplanes_equivalent,
    recover_from_rcf_points,
    solve_hyperplane_from_boundary_points,
)
from app.logging_config import get_logger
from app.models import Hyperplane, QueryLedger, RegionLabel, RobustnessSpec
from app.norms import NormKind, dual_maximizer, dual_norm_eval
from app.oracle import CounterfactualOracle, boundary_distance, classify
from app.regions import (
    RasterGrid,
    compile_model,
    constraint_violation,
    model_from_ledger,
    raster,
    sample_consistent_hyperplanes,
    write_raster_csv,
)
from app.scenarios import WORKED_EXAMPLE, figure_panels, random_hidden
from app.schemas import (
    AttackKind,
    BudgetRow,
    DegeneratePath,
    ExtractionReport,
    RegionSummary,
    RunReport,
    ScenarioConfig,
)

logger = get_logger(__name__)

SOUNDNESS_MARGIN = 1e-6
AGREEMENT_SAMPLES = 100_000
AGREEMENT_FLOOR = 1.0 - 1e-6
SOUNDNESS_CELLS = 1000
DEMO_TOL = 1e-9


# --- extraction runs -------------------------------------------------------

def expected_budget(attack: AttackKind, p: int) -> Dict[str, int]:
    """Queries per trial on the generic path; the orienting factual of CF attacks is not counted."""
    if attack is AttackKind.CF_DIFF:
        return {"cf": 1}
    if attack is AttackKind.CF_NONDIFF:
        return {"cf": p + 1}
    if attack is AttackKind.RCF_DIFF:
        return {"rcf": 1, "factual": 1}
    return {"rcf": p + 1, "factual": p + 1}


def _boundary_limit(attack: AttackKind, p: int) -> int:
    return p + 1 if attack is AttackKind.CF_DIFF else 2 * p


def run_trial(config: ScenarioConfig, seed: int, trial: int) -> Tuple[ExtractionReport, QueryLedger]:
    rng = np.random.default_rng([seed, trial])
    p = config.dimension
    hidden = config.model or random_hidden(rng, p, config.hidden)
    oracle = CounterfactualOracle(hidden, config.norm1, config.robustness, config.tiebreak)
    attack = config.attack
    if attack is AttackKind.CF_DIFF:
        report = extract_cf_differentiable(oracle, rng.standard_normal(p))
    elif attack is AttackKind.CF_NONDIFF:
        report = extract_cf_nondifferentiable(oracle)
    elif attack is AttackKind.RCF_DIFF:
        report = extract_rcf_differentiable(oracle, rng.standard_normal(p))
    else:
        report = extract_rcf_nondifferentiable(oracle)
    agreement = classification_agreement(hidden, report.recovered, samples=AGREEMENT_SAMPLES, seed=trial)
    report = report.model_copy(update={"agreement": agreement})
    logger.debug("Trial finished", extra={"trial": trial, "attack": attack.value})
    return report, oracle.ledger


def _run_trials(config: ScenarioConfig, seed: int) -> List[Tuple[ExtractionReport, QueryLedger]]:
    trials = range(config.trials)
    if settings.WORKERS > 1 and config.trials > 1:
        with ProcessPoolExecutor(max_workers=settings.WORKERS) as pool:
            return list(pool.map(run_trial, [config] * config.trials, [seed] * config.trials, trials))
    return [run_trial(config, seed, t) for t in trials]


def _budget_rows(config: ScenarioConfig, reports: Sequence[ExtractionReport]) -> Tuple[List[BudgetRow], List[str]]:
    p = config.dimension
    expected = expected_budget(config.attack, p)
    generic = [r for r in reports if r.degenerate_path is not DegeneratePath.BOUNDARY_FACTUAL]
    rows = []
    for kind, per_trial in expected.items():
        observed = sum(getattr(r, f"queries_{kind}") for r in generic)
        rows.append(BudgetRow(
            query_type=kind,
            expected_per_trial=per_trial,
            expected_total=per_trial * len(generic),
            observed_total=observed,
            trials_checked=len(generic),
        ))
    diff = [
        f"{row.query_type}: expected {row.expected_total}, observed {row.observed_total}"
        for row in rows if not row.matches
    ]
    limit = _boundary_limit(config.attack, p)
    for t, r in enumerate(reports):
        if r.degenerate_path is DegeneratePath.BOUNDARY_FACTUAL and r.queries_cf > limit:
            diff.append(f"trial {t}: {r.queries_cf} cf queries on the boundary path, limit {limit}")
    return rows, diff


def run_extract(config: ScenarioConfig, ledger_out: Optional[Union[str, Path]] = None) -> RunReport:
    """Run the configured attack over seeded trials and check the query budget."""
    seed = settings.effective_seed(config.seed)
    results = _run_trials(config, seed)
    reports = [r for r, _ in results]
    if ledger_out is not None:
        results[0][1].write_jsonl(ledger_out)

    rows, failures = _budget_rows(config, reports)
    for t, r in enumerate(reports):
        if not r.equivalent:
            failures.append(f"trial {t}: recovered hyperplane not equivalent (residual {r.equivalence_residual:.3e})")
        elif r.agreement is not None and r.agreement < AGREEMENT_FLOOR:
            failures.append(f"trial {t}: recovered hyperplane agrees on {r.agreement:.6f} of off-band samples")

    counts = {
        "cf": sum(r.queries_cf for r in reports),
        "rcf": sum(r.queries_rcf for r in reports),
        "factual": sum(r.queries_factual for r in reports),
    }
    report = RunReport(
        command="extract",
        seed=seed,
        config=config,
        trials=reports,
        budget=rows,
        counts=counts,
        failures=failures,
        passed=not failures,
    )
    logger.info(
        f"Extraction run: {sum(r.equivalent for r in reports)}/{len(reports)} equivalent",
        extra={"attack": config.attack.value, "dimension": config.dimension},
    )
    return report


# --- region runs -----------------------------------------------------------

def _unknown_outside_band(grid: RasterGrid, hidden: Hyperplane) -> int:
    band = 2.0 * max(grid.cell_size)
    a = hidden.weights
    scale = float(np.linalg.norm(a))
    count = 0
    for x, y, label in grid.cells():
        if label is RegionLabel.UNKNOWN and abs(a[0] * x + a[1] * y - hidden.b) / scale > band:
            count += 1
    return count


def _soundness_violations(grid: RasterGrid, hyperplanes: List[Hyperplane], seed: int) -> int:
    decided = [(x, y, label) for x, y, label in grid.cells() if label is not RegionLabel.UNKNOWN]
    if not decided:
        return 0
    rng = np.random.default_rng(seed)
    if len(decided) > SOUNDNESS_CELLS:
        picks = rng.choice(len(decided), size=SOUNDNESS_CELLS, replace=False)
        decided = [decided[i] for i in sorted(picks)]
    Z = np.array([h.params for h in hyperplanes])
    Z /= np.linalg.norm(Z, axis=1, keepdims=True)
    violations = 0
    for x, y, label in decided:
        margins = Z @ np.array([x, y, -1.0])
        if label is RegionLabel.NO and np.any(margins > SOUNDNESS_MARGIN):
            violations += 1
        elif label is RegionLabel.YES and np.any(margins < -SOUNDNESS_MARGIN):
            violations += 1
    return violations


def summarize_region(name: str, ledger: QueryLedger, norm1: NormKind,
                     spec: Optional[RobustnessSpec], lo, hi, resolution: int,
                     raster_path: Optional[Union[str, Path]] = None,
                     hidden: Optional[Hyperplane] = None, samples: int = 0,
                     seed: int = 0, augment: bool = False,
                     dimension: Optional[int] = None) -> Tuple[RegionSummary, List[str]]:
    failures: List[str] = []
    model = model_from_ledger(ledger, norm1, spec, dimension=dimension, augment=augment)
    grid = raster(model, lo, hi, resolution)
    summary = RegionSummary(
        name=name,
        kind=model.kind,
        rows=model.row_count,
        relaxed=compile_model(model).relaxed,
        yes_cells=grid.count(RegionLabel.YES),
        no_cells=grid.count(RegionLabel.NO),
        unknown_cells=grid.count(RegionLabel.UNKNOWN),
    )
    if raster_path is not None:
        summary.raster_path = str(write_raster_csv(grid, raster_path))
    if hidden is not None:
        summary.unknown_outside_band = _unknown_outside_band(grid, hidden)
        if constraint_violation(model, hidden) > 1e-9:
            failures.append(f"{name}: the hidden hyperplane violates the model")
    if samples > 0:
        try:
            sampled = sample_consistent_hyperplanes(model, samples, seed=seed)
        except SamplingError as exc:
            logger.warning(f"{name}: sampler cross-check skipped ({exc.detail})")
        else:
            summary.acceptance_rate = sampled.acceptance_rate
            summary.soundness_violations = _soundness_violations(grid, sampled.hyperplanes, seed)
            if summary.soundness_violations:
                failures.append(f"{name}: {summary.soundness_violations} cells contradicted by sampled hyperplanes")
    return summary, failures


def run_regions(config: ScenarioConfig, ledger_path: Union[str, Path],
                raster_path: Optional[Union[str, Path]] = None) -> RunReport:
    """Build the model of a recorded ledger and rasterize its forced regions."""
    if config.raster is None:
        raise ConfigurationError("regions needs a raster section in the config")
    seed = settings.effective_seed(config.seed)
    ledger = QueryLedger.read_jsonl(ledger_path)
    summary, failures = summarize_region(
        "ledger", ledger, config.norm1, config.robustness,
        config.raster.lo, config.raster.hi, config.raster.resolution,
        raster_path=raster_path, hidden=config.model, samples=config.samples,
        seed=seed, augment=config.augment, dimension=config.dimension,
    )
    return RunReport(
        command="regions",
        seed=seed,
        config=config,
        counts=ledger.counts(),
        regions=[summary],
        raster_paths=[summary.raster_path] if summary.raster_path else [],
        failures=failures,
        passed=not failures,
    )


def raster_figure(figure: int, out_dir: Union[str, Path], resolution: int = 200,
                  samples: int = 0) -> RunReport:
    """One CSV per panel of a two-dimensional figure scenario."""
    out_dir = Path(out_dir)
    regions: List[RegionSummary] = []
    failures: List[str] = []
    for panel in figure_panels(figure):
        summary, panel_failures = summarize_region(
            panel.name, panel.ledger, panel.norm1, panel.spec, panel.lo, panel.hi,
            resolution, raster_path=out_dir / f"{panel.name}.csv", hidden=panel.hidden,
            samples=samples, augment=panel.spec is not None,
        )
        regions.append(summary)
        failures.extend(panel_failures)
    return RunReport(
        command="raster",
        regions=regions,
        raster_paths=[r.raster_path for r in regions],
        failures=failures,
        passed=not failures,
    )


# --- worked examples -------------------------------------------------------

def _fmt(v) -> str:
    return "(" + ", ".join(f"{float(c):.6g}" for c in np.atleast_1d(v)) + ")"


class _Demo:
    def __init__(self):
        self.lines: List[str] = []
        self.mismatches: List[str] = []

    def say(self, text: str = "") -> None:
        self.lines.append(text)

    def expect(self, what: str, got, want) -> None:
        got = np.asarray(got, dtype=float)
        want = np.asarray(want, dtype=float)
        if got.shape != want.shape or not np.allclose(got, want, rtol=0.0, atol=DEMO_TOL):
            self.mismatches.append(f"{what}: got {_fmt(got)}, expected {_fmt(want)}")


def _demo_counterfactual(demo: _Demo) -> None:
    norm1 = NormKind.linf()
    h = WORKED_EXAMPLE
    demo.say(f"Counterfactual example: hidden a = {_fmt(h.a)}, b = {h.b:g}, norm1 = {norm1}")
    v = dual_maximizer(h.weights, norm1)
    demo.say(f"  ||a||* = {dual_norm_eval(h.weights, norm1):g}, v = {_fmt(v)}")
    expected = {(3.0, 0.0): (2.0, 1.0), (-1.0, 1.0): (1.0, -1.0)}
    oracle = CounterfactualOracle(h, norm1)
    boundary = []
    for x, want in expected.items():
        d = boundary_distance(h, x, norm1)
        x_cf = oracle.counterfactual(x)
        demo.say(f"  x = {_fmt(x)}: d = {d:.6g}, x_CF = {_fmt(x_cf)}")
        demo.expect(f"CF of {x}", x_cf, want)
        boundary.append(x_cf)
    for x_cf in boundary:
        demo.say(f"  row: {x_cf[0]:g} a1 + {x_cf[1]:g} a2 - b = 0")
    # fixing b = 1 leaves a square system in a
    a = np.linalg.solve(np.array(boundary), np.ones(2))
    demo.say(f"  with b = 1: a = {_fmt(a)}")
    demo.expect("solution with b = 1", a, (2.0 / 3.0, -1.0 / 3.0))
    recovered = solve_hyperplane_from_boundary_points(boundary)
    equivalent, residual = hyperplanes_equivalent(h, recovered)
    demo.say(f"  recovered {_fmt(recovered.params)}, residual {residual:.3e}")
    if not equivalent or residual > 1e-12:
        demo.mismatches.append(f"counterfactual system residual {residual:.3e}")


def _demo_robust(demo: _Demo) -> None:
    norm1 = NormKind.linf()
    spec = RobustnessSpec(norm2=NormKind.l1(), rho=1.0)
    h = WORKED_EXAMPLE
    demo.say(f"Robust example: norm1 = {norm1}, norm2 = {spec.norm2}, rho = {spec.rho:g}")
    oracle = CounterfactualOracle(h, norm1, robustness=spec)
    expected = {(3.0, 0.0): (4.0 / 3.0, 5.0 / 3.0), (-1.0, 1.0): (5.0 / 3.0, -5.0 / 3.0)}
    points, labels, factuals = [], [], []
    for x, want in expected.items():
        q = classify(h, x)
        x_rcf = oracle.robust_counterfactual(x)
        d = (-h.margin(x) - q * spec.rho * dual_norm_eval(h.weights, spec.norm2)) / dual_norm_eval(h.weights, norm1)
        demo.say(f"  x = {_fmt(x)}: label {q:+d}, d = {d:.6g}, x_RCF = {_fmt(x_rcf)}")
        demo.expect(f"RCF of {x}", x_rcf, want)
        points.append(x_rcf)
        labels.append(q)
        factuals.append(x)
    for r, q in zip(points, labels):
        demo.say(f"  row: {r[0]:.6g} a1 + {r[1]:.6g} a2 - b = {-q * spec.rho:+g}, ||a||_inf = 1")
    recovery = recover_from_rcf_points(points, labels, factuals, norm1, spec)
    for check in recovery.candidates:
        verdict = "accepted" if check.accepted else "rejected: " + ", ".join(check.reasons())
        demo.say(f"  candidate {_fmt(check.params)} {verdict}")
    rejected = [c for c in recovery.candidates if not c.accepted]
    if not any(abs(c.params[0] + 1.0) <= DEMO_TOL for c in rejected):
        demo.mismatches.append("candidate with a1 = -1 was not rejected")
    demo.expect("robust recovery", recovery.hyperplane.params, (1.0, -0.5, 1.5))
    demo.say(f"  recovered {_fmt(recovery.hyperplane.params)}")


def _demo_attacks(demo: _Demo) -> None:
    for attack, spec in (
        (AttackKind.CF_NONDIFF, None),
        (AttackKind.RCF_NONDIFF, RobustnessSpec(norm2=NormKind.l1(), rho=1.0)),
    ):
        config = ScenarioConfig(
            dimension=2, model=WORKED_EXAMPLE, norm1=NormKind.linf(), robustness=spec, attack=attack,
        )
        report, _ = run_trial(config, 0, 0)
        budget = expected_budget(attack, 2)
        observed = {kind: getattr(report, f"queries_{kind}") for kind in budget}
        demo.say(f"Full {attack.value} attack: {observed}, residual {report.equivalence_residual:.3e}")
        if observed != budget:
            demo.mismatches.append(f"{attack.value} budget {observed}, expected {budget}")
        if not report.equivalent or report.equivalence_residual > 1e-12:
            demo.mismatches.append(f"{attack.value} residual {report.equivalence_residual:.3e}")


def run_demo() -> str:
    """Replay both worked examples; AssertionFailure when any number is off."""
    demo = _Demo()
    _demo_counterfactual(demo)
    demo.say()
    _demo_robust(demo)
    demo.say()
    _demo_attacks(demo)
    text = "\n".join(demo.lines) + "\n"
    if demo.mismatches:
        raise AssertionFailure("demo mismatch: " + "; ".join(demo.mismatches))
    return text


# --- reports ---------------------------------------------------------------

def _encode(value) -> str:
    if isinstance(value, dict):
        items = sorted(value.items())
        return "{" + ",".join(json.dumps(str(k)) + ":" + _encode(v) for k, v in items) + "}"
    if isinstance(value, (list, tuple)):
        return "[" + ",".join(_encode(v) for v in value) + "]"
    if isinstance(value, bool) or value is None:
        return json.dumps(value)
    if isinstance(value, float):
        return "%.17g" % value
    if isinstance(value, int):
        return str(value)
    return json.dumps(value, ensure_ascii=False)


def canonical_json(report: RunReport) -> str:
    """Sorted keys, 17 significant digits, no timestamp"""
    return _encode(report.model_dump(mode="json", exclude={"generated_at"})) + "\n"


def write_report(report: RunReport, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(canonical_json(report), encoding="utf-8")
    return path
