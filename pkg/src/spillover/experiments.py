"""Monte Carlo experiment runners and the real-data analysis workflow.

Each experiment is a pure function of its configuration: replication r of
arm a draws every random object from streams keyed by
(master_seed, purpose, a, r), so outputs are identical whatever the worker
count, and a manifest written next to the outputs pins the exact
configuration and library versions that produced them.
"""

import csv
import json
import multiprocessing
import os
import warnings
from dataclasses import dataclass, fields, asdict

import numpy as np
import scipy
import scipy.stats

from . import __version__
from .errors import DataError, UsageError
from .estimators import difference_in_means, unit_statistics
from .graph import erdos_renyi, load_edge_list
from .inference import (
    build_report,
    neyman_variance,
    sutva_test,
    variance_estimate,
)
from .outcomes import generate_instance, ground_truth_tte, realize
from .randomization import (
    balanced_partition,
    bernoulli_assign,
    cluster_assign,
    load_clusters,
)
from .seeds import derive_seed

EXPERIMENTS = (
    "variance_scaling",
    "normality",
    "var_estimator_eval",
    "compare_estimators",
    "sutva_power",
)

# stream purposes
_GRAPH, _INSTANCE, _ASSIGN, _CLUSTER_ASSIGN, _CLUSTER_SHAPE = 1, 2, 3, 4, 5


@dataclass
class ExperimentConfig:
    experiment: str = "variance_scaling"
    n: int = 2000
    p: float = 0.5
    gamma1: float = 1.0
    gamma2: float = 0.5
    link: str = "sqrt"
    d_bar_list: tuple = (5.0, 10.0, 15.0, 20.0)
    replications: int = 300
    master_seed: int = 0
    output_dir: str = "out"
    threads: int = 1
    alpha: float = 0.05
    fixed_instance: bool = False
    clusters_path: str = ""
    n_clusters: int = 0

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise UsageError(
                f"unknown experiment {self.experiment!r}; valid: {', '.join(EXPERIMENTS)}"
            )
        if not 0.0 < self.p < 1.0:
            raise UsageError("p must be in (0,1)")
        if not 0.0 < self.alpha < 1.0:
            raise UsageError("alpha must be in (0,1)")
        if isinstance(self.d_bar_list, (int, float)):
            self.d_bar_list = (float(self.d_bar_list),)
        self.d_bar_list = tuple(float(d) for d in self.d_bar_list)
        if not self.d_bar_list:
            raise UsageError("d_bar_list must be non-empty")
        if self.replications < 1:
            raise UsageError("replications must be >= 1")
        if self.threads < 1:
            raise UsageError("threads must be >= 1")


_CONFIG_PARSERS = {
    "experiment": str,
    "n": int,
    "p": float,
    "gamma1": float,
    "gamma2": float,
    "link": str,
    "d_bar_list": lambda s: tuple(float(x) for x in str(s).split(",") if x.strip()),
    "replications": int,
    "master_seed": int,
    "output_dir": str,
    "threads": int,
    "alpha": float,
    "fixed_instance": lambda s: str(s).strip().lower() in ("1", "true", "yes"),
    "clusters_path": str,
    "n_clusters": int,
}


def parse_config_file(path):
    """Flat 'key = value' UTF-8 file; unknown keys are rejected."""
    out = {}
    with open(path, "rt", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            if key not in _CONFIG_PARSERS:
                raise UsageError(
                    f"{path}:{lineno}: unknown key {key!r}; valid keys: "
                    + ", ".join(sorted(_CONFIG_PARSERS))
                )
            try:
                out[key] = _CONFIG_PARSERS[key](value)
            except ValueError:
                raise UsageError(f"{path}:{lineno}: bad value for {key}: {value!r}")
    return out


def config_from_sources(file_values=None, overrides=None):
    values = dict(file_values or {})
    for key, val in (overrides or {}).items():
        if val is not None:
            values[key] = val
    unknown = set(values) - {f.name for f in fields(ExperimentConfig)}
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
    return ExperimentConfig(**values)


@dataclass
class ReplicationRecord:
    """One replication's outputs; reproducible from (config, indices) alone."""

    arm: int
    d_bar: float
    replication_index: int
    seed: int
    pi: float = float("nan")
    dim: float = float("nan")
    contrast: float = float("nan")
    var_pi: float = float("nan")
    var_contrast: float = float("nan")
    tte: float = float("nan")
    p_contrast: float = float("nan")


def _fmt(x):
    # cast numpy scalars so reprs stay plain shortest-round-trip decimals
    if isinstance(x, float):
        return repr(float(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return str(x)


def _write_csv(path, header, rows):
    with open(path, "wt", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(x) for x in row])


def _write_json(path, obj):
    with open(path, "wt", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_manifest(output_dir, cfg, extra=None):
    manifest = {
        "config": asdict(cfg),
        "versions": {
            "spillover": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
    }
    if extra:
        manifest.update(extra)
    _write_json(os.path.join(output_dir, "manifest.json"), manifest)
    return manifest


def config_from_manifest(path, experiment=None):
    with open(path, "rt", encoding="utf-8") as fh:
        manifest = json.load(fh)
    cfg_dict = dict(manifest["config"])
    cfg_dict["d_bar_list"] = tuple(cfg_dict["d_bar_list"])
    if experiment is not None:
        cfg_dict["experiment"] = experiment
    return config_from_sources(cfg_dict)


def _instance_for(cfg, arm, rep):
    """Fresh graph + instance per replication unless pinned by the config."""
    idx = 0 if cfg.fixed_instance else rep
    d_bar = cfg.d_bar_list[arm]
    g = erdos_renyi(cfg.n, d_bar, derive_seed(cfg.master_seed, _GRAPH, arm, idx))
    model = generate_instance(
        g,
        cfg.gamma1,
        cfg.gamma2,
        cfg.link,
        derive_seed(cfg.master_seed, _INSTANCE, arm, idx),
    )
    return g, model


def _replicate_estimates(cfg, arm, rep, want_variance, want_sutva=False):
    g, model = _instance_for(cfg, arm, rep)
    seed = derive_seed(cfg.master_seed, _ASSIGN, arm, rep)
    a = bernoulli_assign(cfg.n, cfg.p, seed)
    y = realize(model, a)
    stats = unit_statistics(g, y, a)
    rec = ReplicationRecord(
        arm=arm,
        d_bar=cfg.d_bar_list[arm],
        replication_index=rep,
        seed=seed,
        pi=float(np.mean(stats.t)),
        dim=float(np.mean(y * stats.d)),
        contrast=float(np.mean(stats.t_prime)),
        tte=ground_truth_tte(model),
    )
    if want_variance:
        rec.var_pi = variance_estimate(g, stats, rec.pi, mode="full").value
    if want_sutva:
        ve = variance_estimate(g, stats, rec.contrast, mode="no_self")
        rec.var_contrast = ve.value
        report = build_report(
            "contrast", rec.contrast, ve.value, n=g.n,
            d_max=g.degree_stats().max_closed_degree, alpha=cfg.alpha,
            clipped=ve.clipped,
        )
        rec.p_contrast = report.p_normal
    return rec


def _worker(args):
    cfg, arm, rep, want_variance, want_sutva = args
    return _replicate_estimates(cfg, arm, rep, want_variance, want_sutva)


def _run_replications(cfg, want_variance=False, want_sutva=False):
    tasks = [
        (cfg, arm, rep, want_variance, want_sutva)
        for arm in range(len(cfg.d_bar_list))
        for rep in range(cfg.replications)
    ]
    if cfg.threads > 1:
        ctx = multiprocessing.get_context("fork")
        with ctx.Pool(cfg.threads) as pool:
            records = pool.map(_worker, tasks, chunksize=8)
    else:
        records = [_worker(t) for t in tasks]
    return records


_RECORD_HEADER = [
    "arm", "d_bar", "replication_index", "seed",
    "pi", "dim", "contrast", "var_pi", "var_contrast", "tte", "p_contrast",
]


def _record_rows(records):
    return [
        [r.arm, r.d_bar, r.replication_index, r.seed, r.pi, r.dim, r.contrast,
         r.var_pi, r.var_contrast, r.tte, r.p_contrast]
        for r in records
    ]


def _ensure_outdir(cfg):
    os.makedirs(cfg.output_dir, exist_ok=True)


def run_variance_scaling(cfg):
    """Empirical estimator variance per mean-degree arm, with the least
    squares fit of variance against squared degree."""
    if cfg.replications < 2:
        raise UsageError("variance_scaling needs replications >= 2")
    _ensure_outdir(cfg)
    records = _run_replications(cfg)
    rows = []
    d2, variances = [], []
    for arm, d_bar in enumerate(cfg.d_bar_list):
        vals = np.array([r.pi for r in records if r.arm == arm])
        var = float(np.var(vals, ddof=1))
        rows.append([d_bar, d_bar * d_bar, var, vals.size])
        d2.append(d_bar * d_bar)
        variances.append(var)
    fit = fit_line(np.array(d2), np.array(variances))
    _write_csv(
        os.path.join(cfg.output_dir, "variance_scaling.csv"),
        ["d_bar", "d_bar_sq", "empirical_variance", "replications"],
        rows,
    )
    _write_json(os.path.join(cfg.output_dir, "variance_fit.json"), fit)
    _write_csv(
        os.path.join(cfg.output_dir, "records.csv"), _RECORD_HEADER, _record_rows(records)
    )
    write_manifest(cfg.output_dir, cfg)
    return rows, fit


def fit_line(x, y):
    """Least squares y = slope * x + intercept plus R^2."""
    if x.size < 2:
        raise UsageError("need at least two arms to fit a line")
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return {"slope": float(slope), "intercept": float(intercept), "r_squared": r2}


def run_normality(cfg, bins=40, bin_range=4.0):
    """Standardized estimator samples per arm with histogram and KS report."""
    if cfg.replications < 2:
        raise UsageError("normality needs replications >= 2")
    _ensure_outdir(cfg)
    for d_bar in cfg.d_bar_list:
        if d_bar * d_bar > cfg.n / 10:
            warnings.warn(
                f"d_bar={d_bar:g} is outside the validated sparse regime "
                f"(d_bar^2 > n/10 at n={cfg.n})",
                stacklevel=2,
            )
    records = _run_replications(cfg)
    summary = []
    for arm, d_bar in enumerate(cfg.d_bar_list):
        vals = np.array([r.pi for r in records if r.arm == arm])
        standardized = (vals - vals.mean()) / vals.std(ddof=1)
        ks = scipy.stats.kstest(standardized, "norm")
        edges = np.linspace(-bin_range, bin_range, bins + 1)
        counts, _ = np.histogram(standardized, bins=edges)
        centers = (edges[:-1] + edges[1:]) / 2
        width = edges[1] - edges[0]
        density = counts / (vals.size * width)
        normal_density = scipy.stats.norm.pdf(centers)
        _write_csv(
            os.path.join(cfg.output_dir, f"normality_hist_arm{arm}.csv"),
            ["bin_center", "count", "density", "normal_density"],
            list(zip(centers, counts, density, normal_density)),
        )
        summary.append([d_bar, float(ks.statistic), float(ks.pvalue), vals.size])
    _write_csv(
        os.path.join(cfg.output_dir, "normality.csv"),
        ["d_bar", "ks_statistic", "ks_pvalue", "replications"],
        summary,
    )
    _write_csv(
        os.path.join(cfg.output_dir, "records.csv"), _RECORD_HEADER, _record_rows(records)
    )
    write_manifest(cfg.output_dir, cfg)
    return summary


def run_var_estimator_eval(cfg):
    """Empirical variance vs the dependency-aware estimate, per arm."""
    if cfg.replications < 2:
        raise UsageError("var_estimator_eval needs replications >= 2")
    _ensure_outdir(cfg)
    records = _run_replications(cfg, want_variance=True)
    rows = []
    for arm, d_bar in enumerate(cfg.d_bar_list):
        vals = np.array([r.pi for r in records if r.arm == arm])
        vhats = np.array([r.var_pi for r in records if r.arm == arm])
        emp = float(np.var(vals, ddof=1))
        rows.append(
            [cfg.link, d_bar, emp, float(vhats.mean()), float(vhats.std(ddof=1)),
             (float(vhats.mean()) - emp) / emp if emp > 0 else float("nan"),
             vals.size]
        )
    _write_csv(
        os.path.join(cfg.output_dir, "var_estimator_eval.csv"),
        ["link", "d_bar", "sigma2_empirical", "mean_var_hat", "std_var_hat",
         "relative_bias", "replications"],
        rows,
    )
    _write_csv(
        os.path.join(cfg.output_dir, "records.csv"), _RECORD_HEADER, _record_rows(records)
    )
    write_manifest(cfg.output_dir, cfg)
    return rows


def _comparison_clustering(cfg):
    if cfg.clusters_path:
        return load_clusters(cfg.clusters_path, cfg.n), cfg.clusters_path
    if cfg.n_clusters > 0:
        c = balanced_partition(
            cfg.n, cfg.n_clusters, derive_seed(cfg.master_seed, _CLUSTER_SHAPE)
        )
        return c, f"balanced_partition(k={cfg.n_clusters}, non-paper plumbing)"
    return None, "absent (cluster arm skipped)"


def run_compare_estimators(cfg, clustering=None):
    """Bias / variance / MSE of the three designs on one fixed instance.

    The network and outcome model are drawn once from the master seed and
    held fixed; replications redraw assignments only, so the bias column
    is measured against a single ground-truth effect as in a real
    experiment replay.
    """
    if cfg.replications < 2:
        raise UsageError("compare_estimators needs replications >= 2")
    _ensure_outdir(cfg)
    cluster_note = "provided by caller"
    if clustering is None:
        clustering, cluster_note = _comparison_clustering(cfg)
    d_bar = cfg.d_bar_list[0]
    g = erdos_renyi(cfg.n, d_bar, derive_seed(cfg.master_seed, _GRAPH))
    model = generate_instance(
        g, cfg.gamma1, cfg.gamma2, cfg.link, derive_seed(cfg.master_seed, _INSTANCE)
    )
    tte = ground_truth_tte(model)
    est = {"dim_bernoulli": [], "dim_cluster": [], "pi_bernoulli": []}
    for rep in range(cfg.replications):
        a = bernoulli_assign(cfg.n, cfg.p, derive_seed(cfg.master_seed, _ASSIGN, 0, rep))
        y = realize(model, a)
        stats = unit_statistics(g, y, a)
        est["pi_bernoulli"].append(float(np.mean(stats.t)))
        est["dim_bernoulli"].append(difference_in_means(y, a))
        if clustering is not None:
            ac = cluster_assign(
                clustering, cfg.p, derive_seed(cfg.master_seed, _CLUSTER_ASSIGN, 0, rep)
            )
            yc = realize(model, ac)
            est["dim_cluster"].append(difference_in_means(yc, ac))
    rows = []
    for name in ("dim_bernoulli", "dim_cluster", "pi_bernoulli"):
        vals = np.array(est[name])
        if vals.size == 0:
            rows.append([name, "", "", "", 0])
            continue
        bias = float(vals.mean() - tte)
        var = float(np.var(vals, ddof=1))
        rows.append([name, bias, var, bias * bias + var, vals.size])
    _write_csv(
        os.path.join(cfg.output_dir, "compare_estimators.csv"),
        ["estimator", "bias", "variance", "mse", "replications"],
        rows,
    )
    write_manifest(
        cfg.output_dir, cfg, extra={"tte": tte, "clustering": cluster_note}
    )
    return rows, tte


def run_sutva_power(cfg):
    """Rejection rate of the interference test at the configured level."""
    _ensure_outdir(cfg)
    records = _run_replications(cfg, want_sutva=True)
    rows = []
    for arm, d_bar in enumerate(cfg.d_bar_list):
        arm_recs = [r for r in records if r.arm == arm]
        pvals = np.array([r.p_contrast for r in arm_recs])
        rows.append(
            [d_bar, cfg.gamma2, cfg.alpha, float(np.mean(pvals <= cfg.alpha)),
             float(np.mean([r.contrast for r in arm_recs])),
             float(np.mean([r.var_contrast for r in arm_recs])), pvals.size]
        )
    _write_csv(
        os.path.join(cfg.output_dir, "sutva_power.csv"),
        ["d_bar", "gamma2", "alpha", "rejection_rate", "mean_contrast",
         "mean_var_hat", "replications"],
        rows,
    )
    _write_csv(
        os.path.join(cfg.output_dir, "records.csv"), _RECORD_HEADER, _record_rows(records)
    )
    write_manifest(cfg.output_dir, cfg)
    return rows


RUNNERS = {
    "variance_scaling": run_variance_scaling,
    "normality": run_normality,
    "var_estimator_eval": run_var_estimator_eval,
    "compare_estimators": run_compare_estimators,
    "sutva_power": run_sutva_power,
}


def load_metrics_table(path):
    """Metrics TSV with a 'node_id<TAB>z<TAB><name>...' header.

    Returns (z, {metric name: outcome vector}); every node 0..n-1 must
    appear exactly once and z must be binary.
    """
    with open(path, "rt", encoding="utf-8") as fh:
        lines = [
            (no, ln.rstrip("\n"))
            for no, ln in enumerate(fh, start=1)
            if ln.strip() and not ln.startswith("#")
        ]
    if not lines:
        raise DataError(f"{path}: empty metrics table")
    head_no, head = lines[0]
    cols = head.split("\t")
    if len(cols) < 3 or cols[0] != "node_id" or cols[1] != "z":
        raise DataError(
            f"{path}:{head_no}: header must be 'node_id<TAB>z<TAB><metric>...'"
        )
    names = cols[2:]
    n = len(lines) - 1
    z = np.full(n, -1, dtype=np.int64)
    table = np.full((n, len(names)), np.nan)
    for no, line in lines[1:]:
        parts = line.split("\t")
        if len(parts) != len(cols):
            raise DataError(
                f"{path}:{no}: expected {len(cols)} columns, got {len(parts)}"
            )
        try:
            node = int(parts[0])
            zval = int(parts[1])
            vals = [float(x) for x in parts[2:]]
        except ValueError:
            raise DataError(f"{path}:{no}: non-numeric field")
        if not 0 <= node < n:
            raise DataError(f"{path}:{no}: node id {node} outside 0..{n - 1}")
        if z[node] != -1:
            raise DataError(f"{path}:{no}: duplicate row for node {node}")
        if zval not in (0, 1):
            raise DataError(f"{path}:{no}: z must be 0 or 1")
        z[node] = zval
        table[node] = vals
    if not np.isfinite(table).all():
        raise DataError(f"{path}: non-finite metric value")
    return z, {name: table[:, j].copy() for j, name in enumerate(names)}


def analyze(edges_path, metrics_path, p, alpha=0.05, output_dir=None):
    """Per-metric report: difference-in-means with its two-group variance,
    the network estimator with the dependency-aware variance, and the
    interference contrast with the self-excluded variance."""
    from .randomization import Assignment

    g = load_edge_list(edges_path)
    z, metrics = load_metrics_table(metrics_path)
    if z.size != g.n:
        raise DataError(
            f"metrics cover {z.size} nodes but the graph has {g.n}"
        )
    a = Assignment(z=z, p=p)
    d_max = g.degree_stats().max_closed_degree
    rows = []
    reports = {}
    for name, y in metrics.items():
        stats = unit_statistics(g, y, a)
        dim_point = difference_in_means(y, a)
        dim_rep = build_report("dim", dim_point, neyman_variance(y, a), g.n, 1, alpha)
        pi_point = float(np.mean(stats.t))
        pi_var = variance_estimate(g, stats, pi_point, mode="full")
        pi_rep = build_report(
            "pseudo_inverse", pi_point, pi_var.value, g.n, d_max, alpha,
            clipped=pi_var.clipped,
        )
        con_rep = sutva_test(g, y, a, alpha)
        reports[name] = (dim_rep, pi_rep, con_rep)
        rows.append(
            [name,
             dim_rep.point, dim_rep.var_hat, dim_rep.p_normal,
             pi_rep.point, pi_rep.var_hat, pi_rep.p_normal,
             con_rep.point, con_rep.var_hat, con_rep.p_normal]
        )
    header = [
        "metric",
        "dim_value", "dim_var", "dim_p",
        "pi_value", "pi_var", "pi_p",
        "contrast_value", "contrast_var", "contrast_p",
    ]
    if output_dir is not None:
        os.makedirs(output_dir, exist_ok=True)
        _write_csv(os.path.join(output_dir, "analysis.csv"), header, rows)
        _write_json(
            os.path.join(output_dir, "analysis.json"),
            {
                name: [r.to_dict() for r in reps]
                for name, reps in sorted(reports.items())
            },
        )
        manifest = {
            "command": "analyze",
            "edges": str(edges_path),
            "metrics": str(metrics_path),
            "p": p,
            "alpha": alpha,
            "n": g.n,
            "d_max": d_max,
            "versions": {
                "spillover": __version__,
                "numpy": np.__version__,
                "scipy": scipy.__version__,
            },
        }
        _write_json(os.path.join(output_dir, "manifest.json"), manifest)
    return header, rows, reports
