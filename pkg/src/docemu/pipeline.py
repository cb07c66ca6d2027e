"""End-to-end orchestration: sample -> design -> simulate -> fit -> predict -> doc.

Every stage function here is also what the matching CLI subcommand calls,
so running ``run`` is equivalent to invoking the stages one by one with the
same master seed.
"""
import logging
import platform
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import io
from ._rng import derive_seed
from .design import cross_with_or, grid_design, kmeans_centroids, or_grid
from .doc import SimStudyConfig, doc_estimate, mc_power, run_sim_study
from .emulator import BetaGPEmulator
from .scmc import ConstraintSpec, run_scmc
from .trial_models import BinaryPrior, OrdinalPrior, TrialConfig, sampling_distribution

log = logging.getLogger(__name__)

SUPERIORITY_SERIES = ("sim_power", "emulated", "ci_low", "ci_high")
AB_SERIES = ("a_hat", "a_ci_low", "a_ci_high", "b_hat", "b_ci_low", "b_ci_high")
FIGURES = ("fig1", "fig2", "fig3", "fig4", "fig5", "fig6", "fig7", "fig8")


class PipelineError(RuntimeError):
    def __init__(self, stage, cause):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause


class MissingStageError(FileNotFoundError):
    pass


# --- configuration -------------------------------------------------------

@dataclass
class RunConfig:
    seed: int
    model: str = "ordinal"
    bounds: dict = field(default_factory=lambda: {
        "lower": [0.5, 0.05, 0.01, 0.005], "upper": [0.9, 0.30, 0.05, 0.025]})
    n_cover: int = 2000
    k: int = 20
    or_grid: list = field(default_factory=lambda: [0.7, 0.8, 0.9, 1.0])
    test_k: int = 20
    test_or_range: list = field(default_factory=lambda: [0.7, 1.0])
    test_or_n: int = 20
    p0_range: list = field(default_factory=lambda: [0.25, 0.7])
    or_range: list = field(default_factory=lambda: [0.65, 1.0])
    train_grid: list = field(default_factory=lambda: [4, 5])
    test_grid: list = field(default_factory=lambda: [10, 10])
    simulate_test: bool = False
    trial: dict = field(default_factory=lambda: {
        "n_total": 1000, "replicates": 500, "posterior_draws": 2000})
    emulator: dict = field(default_factory=dict)
    predictive_draws: int = 1000
    thresholds: dict = field(default_factory=lambda: {
        "superiority": [0.9, 0.95, 0.98], "futility": [0.01, 0.05]})
    simstudy: dict = None

    def __post_init__(self):
        if self.seed is None:
            raise ValueError("config must set a seed")
        if self.model not in ("binary", "ordinal"):
            raise ValueError("model must be 'binary' or 'ordinal'")
        for u in self.thresholds.get("superiority", []) + self.thresholds.get("futility", []):
            if not 0 < u < 1:
                raise ValueError(f"threshold {u} outside (0, 1)")
        if self.model == "ordinal":
            ConstraintSpec.from_dict(self.bounds)
        self.trial_config()

    @classmethod
    def from_dict(cls, d):
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        if "seed" not in d:
            raise ValueError("config must set a seed")
        return cls(**d)

    def to_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    def trial_config(self):
        t = dict(self.trial)
        if isinstance(t.get("binary_prior"), dict):
            t["binary_prior"] = BinaryPrior(**t["binary_prior"])
        if isinstance(t.get("ordinal_prior"), dict):
            t["ordinal_prior"] = OrdinalPrior(**t["ordinal_prior"])
        return TrialConfig(seed=self.seed, **t)


# --- stages --------------------------------------------------------------

def stage_sample_simplex(spec, n, seed):
    return run_scmc(spec, n, seed=seed)


def stage_design(spec, k, or_values, seed, kind="training", n_cover=2000):
    """Covering sample -> k-means centroids -> cross with the OR grid."""
    cover = run_scmc(spec, n_cover, seed=derive_seed(seed, f"design-cover-{kind}"))
    centers = kmeans_centroids(cover, k, seed=derive_seed(seed, f"design-kmeans-{kind}"))
    prov = {"bounds": spec.to_dict(), "k": k, "or_grid": [float(v) for v in or_values],
            "seed": seed, "n_cover": n_cover}
    return cross_with_or(centers, or_values, kind, prov), cover


def stage_grid_design(p0_range, or_range, n_p0, n_or, kind):
    return grid_design(p0_range, or_range, n_p0, n_or, kind)


def stage_simulate(design, model, trial_config, threads=1):
    """Sampling distribution of pi at every design point.

    For the binary model ``trial_config.posterior_draws`` sets the number of
    conjugate posterior draws per replicate.
    """
    stream = f"simulate-{design.kind}"

    def one(i):
        try:
            return sampling_distribution(design.points[i], model, trial_config,
                                         theta_index=i,
                                         binary_draws=trial_config.posterior_draws,
                                         stream=stream)
        except Exception as exc:
            raise RuntimeError(f"theta {i}: {exc}") from exc

    idx = range(len(design))
    if threads and threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(one, idx))
    return [one(i) for i in idx]


def stage_fit(design, pi_samples, seed=0, **emulator_params):
    em = BetaGPEmulator(random_state=derive_seed(seed, "fit"), **emulator_params)
    return em.fit(design.to_array(), pi_samples)


def model_document(emulator, design):
    doc = emulator.to_dict()
    doc["columns"] = design.columns
    doc["beta_fits"] = [{"a": f.a, "b": f.b, "n_draws": f.n_draws,
                         "clamp_count": f.clamp_count, "ks_statistic": f.ks_statistic}
                        for f in getattr(emulator, "beta_fits_", [])]
    return doc


def load_model(path):
    doc = io.read_json(path)
    return BetaGPEmulator.from_dict(doc), doc.get("columns")


def stage_predict(emulator, test, draws, seed):
    return emulator.sample_ab(test.to_array(), draws, derive_seed(seed, "predict"))


def stage_doc(emulator, test, statistic, threshold, draws, seed):
    preds = stage_predict(emulator, test, draws, seed)
    return [doc_estimate(p, statistic, threshold) for p in preds]


# --- writers shared with the CLI ----------------------------------------

def write_predictions(path, test, preds):
    rows = [(i, j, float(a), float(b)) for i, p in enumerate(preds)
            for j, (a, b) in enumerate(p.pairs)]
    io.write_csv(path, ["theta_id", "draw", "a", "b"], rows)


def write_doc(path, test, estimates):
    rows = [list(pt.p) + [pt.odds_ratio, e.point, e.ci_low, e.ci_high]
            for pt, e in zip(test.points, estimates)]
    io.write_csv(path, test.columns + ["point", "ci_low", "ci_high"], rows)


def write_simstudy(path, report):
    rows = [(x[0], x[1], t, r, b, s) for x, t, r, b, s in
            zip(report.test_points, report.phi_true, report.rmse, report.bias, report.psd)]
    io.write_csv(path, ["p0", "or", "phi_true", "rmse", "bias", "psd"], rows)


def doc_filename(statistic, threshold):
    return f"doc_{statistic}_{threshold!r}.csv"


# --- full run ------------------------------------------------------------

def _versions():
    import numpy
    import scipy
    import sklearn
    return {"docemu": __version__, "numpy": numpy.__version__, "scipy": scipy.__version__,
            "scikit-learn": sklearn.__version__, "python": platform.python_version()}


def run_pipeline(config, out_dir, threads=1):
    """Execute every stage and write artifacts plus ``manifest.json``.

    Wall-clock stage times go to ``timings.json``; every other file is a
    deterministic function of the config.
    """
    if isinstance(config, dict):
        config = RunConfig.from_dict(config)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    timings = {}
    seed = config.seed
    tc = config.trial_config()

    def stage(name, fn):
        t0 = time.perf_counter()
        try:
            result = fn()
        except Exception as exc:
            timings[name] = time.perf_counter() - t0
            io.write_json(out / "timings.json", timings)
            raise PipelineError(name, exc) from exc
        timings[name] = time.perf_counter() - t0
        log.info("stage %s finished in %.1fs", name, timings[name])
        return result

    if config.model == "ordinal":
        spec = ConstraintSpec.from_dict(config.bounds)
        train, cover = stage("design-training", lambda: stage_design(
            spec, config.k, config.or_grid, seed, "training", config.n_cover))
        io.write_points(out / "covering_sample.csv", cover)
        test, _ = stage("design-test", lambda: stage_design(
            spec, config.test_k, or_grid(config.test_or_range, config.test_or_n),
            seed, "test", config.n_cover))
    else:
        train = stage("design-training", lambda: stage_grid_design(
            config.p0_range, config.or_range, *config.train_grid, "training"))
        test = stage("design-test", lambda: stage_grid_design(
            config.p0_range, config.or_range, *config.test_grid, "test"))
    io.write_design(out / "design_training.csv", train)
    io.write_design(out / "design_test.csv", test)

    pis = stage("simulate-training", lambda: stage_simulate(
        train, config.model, tc, threads))
    io.write_pi_samples(out / "pi_training.csv", pis)
    if config.simulate_test:
        pis_test = stage("simulate-test", lambda: stage_simulate(
            test, config.model, tc, threads))
        io.write_pi_samples(out / "pi_test.csv", pis_test)

    em = stage("fit", lambda: stage_fit(train, [p.draws for p in pis], seed, **config.emulator))
    io.write_json(out / "model.json", model_document(em, train))

    preds = stage("predict", lambda: stage_predict(em, test, config.predictive_draws, seed))
    write_predictions(out / "predict_test.csv", test, preds)

    for statistic in ("superiority", "futility"):
        for u in config.thresholds.get(statistic, []):
            est = stage(f"doc-{statistic}-{u!r}", lambda s=statistic, u=u: stage_doc(
                em, test, s, u, config.predictive_draws, seed))
            write_doc(out / doc_filename(statistic, u), test, est)

    if config.simstudy is not None:
        sconf = dict(config.simstudy)
        sconf.setdefault("seed", seed)
        report = stage("simstudy", lambda: run_sim_study(SimStudyConfig.from_dict(sconf)))
        write_simstudy(out / "simstudy.csv", report)

    figs = [f for f in FIGURES if _figure_available(out, f, config.model)]
    for fig in figs:
        stage(f"figure-{fig}", lambda f=fig: emit_figure_data(out, f, out / "figures" / f"{f}.csv"))

    io.write_json(out / "timings.json", timings)
    files = sorted(p.relative_to(out).as_posix() for p in out.rglob("*")
                   if p.is_file() and p.name not in ("manifest.json", "timings.json"))
    manifest = {
        "config": config.to_dict(),
        "config_hash": io.config_hash(config.to_dict()),
        "seed": seed,
        "versions": _versions(),
        "artifacts": {f: io.config_hash((out / f).read_text()) for f in files},
        "stages": list(timings),
        "timings_file": "timings.json",
    }
    io.write_json(out / "manifest.json", manifest)
    return manifest


# --- figure data ---------------------------------------------------------

_FIGURE_NEEDS = {
    "fig1": (("covering_sample.csv", "design_training.csv"), "design --cover-out"),
    "fig2": (("design_test.csv", "pi_test.csv"), "simulate (on the test design)"),
    "fig3": (("simstudy.csv",), "simstudy"),
    "fig4": (("simstudy.csv",), "simstudy"),
    "fig5": (("simstudy.csv",), "simstudy"),
    "fig6": (("design_training.csv", "pi_training.csv", "design_test.csv"), "simulate"),
    "fig7": (("design_test.csv",), "doc"),
    "fig8": (("design_test.csv", "predict_test.csv"), "predict"),
}


def _figure_available(run_dir, fig, model):
    if fig == "fig1" and model != "ordinal":
        return False
    if fig == "fig2" and model != "binary":
        return False
    files, _ = _FIGURE_NEEDS[fig]
    ok = all((Path(run_dir) / f).exists() for f in files)
    if fig in ("fig6", "fig7"):
        ok = ok and bool(list(Path(run_dir).glob("doc_superiority_*.csv")))
    if fig == "fig2":
        ok = ok and (Path(run_dir) / doc_filename("superiority", 0.95)).exists()
    return ok


def _require(run_dir, fig):
    files, command = _FIGURE_NEEDS[fig]
    for f in files:
        if not (Path(run_dir) / f).exists():
            raise MissingStageError(
                f"{fig} needs {f}; run the '{command}' command first")


def _theta_cols(rows):
    return [c for c in rows[0] if c.startswith("p") or c == "or"] if rows else []


def _doc_files(run_dir, statistic):
    out = []
    for p in sorted(Path(run_dir).glob(f"doc_{statistic}_*.csv")):
        out.append((float(p.stem.split("_", 2)[2]), p))
    return sorted(out)


def _superiority_rows(run_dir, threshold):
    p = Path(run_dir) / doc_filename("superiority", threshold)
    if not p.exists():
        raise MissingStageError(f"{p.name} missing; run the 'doc' command first")
    return io.read_csv(p)


def emit_figure_data(run_dir, figure_id, out_path, threshold=0.95):
    """Write the long-format data behind one figure and return its path."""
    run_dir = Path(run_dir)
    if figure_id not in FIGURES:
        raise ValueError(f"unknown figure id {figure_id!r}; choose from {FIGURES}")
    _require(run_dir, figure_id)
    design_cols = io.read_design(run_dir / "design_test.csv").columns \
        if (run_dir / "design_test.csv").exists() else ["p1", "p2", "p3", "p4", "or"]

    if figure_id == "fig1":
        cover = io.read_points(run_dir / "covering_sample.csv")
        train = io.read_design(run_dir / "design_training.csv").to_array()
        centers = np.unique(train[:, :-1], axis=0)
        rows = [["covering"] + list(r) for r in cover] + [["design"] + list(r) for r in centers]
        header = ["series"] + [f"p{i + 1}" for i in range(cover.shape[1] if cover.size else 4)]
        io.write_csv(out_path, header, rows)
        return Path(out_path)

    if figure_id in ("fig3", "fig4", "fig5"):
        series = {"fig3": "rmse", "fig4": "bias", "fig5": "psd"}[figure_id]
        rows = [[r["p0"], r["or"], series, r[series]] for r in io.read_csv(run_dir / "simstudy.csv")]
        io.write_csv(out_path, ["p0", "or", "series", "value"], rows)
        return Path(out_path)

    if figure_id == "fig8":
        test = io.read_design(run_dir / "design_test.csv")
        draws = io.read_csv(run_dir / "predict_test.csv")
        by = {}
        for r in draws:
            by.setdefault(int(r["theta_id"]), []).append((float(r["a"]), float(r["b"])))
        rows = []
        for i, pt in enumerate(test.points):
            ab = np.array(by.get(i, []))
            if ab.size == 0:
                continue
            theta = list(pt.p) + [pt.odds_ratio]
            for j, name in enumerate("ab"):
                lo, hi = np.quantile(ab[:, j], [0.025, 0.975])
                for s, v in zip((f"{name}_hat", f"{name}_ci_low", f"{name}_ci_high"),
                                (ab[:, j].mean(), lo, hi)):
                    rows.append(theta + [s, float(v)])
        io.write_csv(out_path, test.columns + ["series", "value"], rows)
        return Path(out_path)

    if figure_id == "fig7":
        rows = []
        for statistic in ("superiority", "futility"):
            for u, p in _doc_files(run_dir, statistic):
                for r in io.read_csv(p):
                    theta = [r[c] for c in design_cols]
                    for s, key in (("emulated", "point"), ("ci_low", "ci_low"), ("ci_high", "ci_high")):
                        rows.append(theta + [statistic, u, s, r[key]])
        io.write_csv(out_path, design_cols + ["statistic", "threshold", "series", "value"], rows)
        return Path(out_path)

    # fig2 (binary, simulated power on the test grid) and fig6 (simulated power
    # on the training design next to emulated power on the test design)
    rows = []
    if figure_id == "fig2":
        sim_design = io.read_design(run_dir / "design_test.csv")
        sims = io.read_pi_samples(run_dir / "pi_test.csv")
    else:
        sim_design = io.read_design(run_dir / "design_training.csv")
        sims = io.read_pi_samples(run_dir / "pi_training.csv")
    for pt, s in zip(sim_design.points, sims):
        rows.append(list(pt.p) + [pt.odds_ratio, "sim_power", mc_power(s, threshold)])
    for r in _superiority_rows(run_dir, threshold):
        theta = [r[c] for c in design_cols]
        for s, key in (("emulated", "point"), ("ci_low", "ci_low"), ("ci_high", "ci_high")):
            rows.append(theta + [s, r[key]])
    io.write_csv(out_path, design_cols + ["series", "value"], rows)
    return Path(out_path)
