"""Staged analysis pipeline: configuration, orchestration, report emission.

Stages run in order (estimate, flip-flop, form difference, model selection);
a failing stage is recorded with its label and the rest still runs.  All
randomness flows from one master seed through per-stage derived seeds, so a
fixed seed yields a byte-identical report.json.
"""

import hashlib
import json
import math
import os
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .estimators import (center_sample, estimate_dependent,
                         estimate_independent, flipflop, gram_matrices,
                         reconstruct_mean_form, sample_moments)
from .formdiff import bootstrap_test
from .linalg import centering_matrix
from .models import EllipticalModel, parse_model_spec
from .selection import _psd_clip, build_selection_report


def stage_seed(master, stage):
    """64-bit seed for one named stage, derived by hashing the master seed."""
    digest = hashlib.sha256(f"{master}:{stage}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


def json_sanitize(obj):
    """Deep-convert to plain JSON types; non-finite floats become null."""
    if isinstance(obj, dict):
        return {str(k): json_sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [json_sanitize(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return json_sanitize(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


@dataclass
class FlipFlopConfig:
    enabled: bool = True
    eps1: float = 5e-6
    eps2: float = 5e-6
    max_iter: int = 150

    def __post_init__(self):
        if self.eps1 <= 0 or self.eps2 <= 0:
            raise ValueError("flip-flop eps thresholds must be positive")
        if self.max_iter < 1:
            raise ValueError("flip-flop max_iter must be positive")


@dataclass
class BootstrapConfig:
    size: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.size < 1:
            raise ValueError("bootstrap size must be at least 1")


@dataclass
class SelectionConfig:
    models: tuple = ()
    references: tuple = ()  # (label, K x D array) pairs for the shape table


@dataclass
class OutputConfig:
    dir: str = "out"
    formats: tuple = ("json", "csv", "svg")

    def __post_init__(self):
        bad = sorted(set(self.formats) - {"json", "csv", "svg"})
        if bad:
            raise ValueError(f"unknown output format(s): {bad}")


@dataclass
class AnalysisConfig:
    """Everything one analysis run needs besides the data itself."""

    model: EllipticalModel
    case: str = "dependent"
    flipflop: FlipFlopConfig = field(default_factory=FlipFlopConfig)
    bootstrap: BootstrapConfig = field(default_factory=BootstrapConfig)
    selection: SelectionConfig = field(default_factory=SelectionConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    verbose: bool = False

    def __post_init__(self):
        if self.case not in ("dependent", "independent"):
            raise ValueError("case must be 'dependent' or 'independent'")

    @classmethod
    def from_dict(cls, blob):
        """Build from a plain-dict config (the on-disk JSON config format).

        selection.references may list file paths; each is loaded as a K x D
        matrix and labeled by its file stem.
        """
        known = {"model", "case", "flipflop", "bootstrap", "selection",
                 "output", "verbose"}
        extra = sorted(set(blob) - known)
        if extra:
            raise ValueError(f"unknown config key(s): {extra}")
        if "model" not in blob:
            raise ValueError("config needs a 'model' entry")
        model = blob["model"]
        if not isinstance(model, EllipticalModel):
            model = parse_model_spec(str(model))
        sel_blob = dict(blob.get("selection", {}))
        models = tuple(m if isinstance(m, EllipticalModel)
                       else parse_model_spec(str(m))
                       for m in sel_blob.pop("models", ()))
        refs = []
        for ref in sel_blob.pop("references", ()):
            if isinstance(ref, (list, tuple)) and len(ref) == 2:
                refs.append((str(ref[0]), np.asarray(ref[1], dtype=float)))
            else:
                label = os.path.splitext(os.path.basename(str(ref)))[0]
                refs.append((label, np.loadtxt(str(ref), ndmin=2)))
        if sel_blob:
            raise ValueError(
                f"unknown selection key(s): {sorted(sel_blob)}")
        out_blob = dict(blob.get("output", {}))
        if "formats" in out_blob:
            out_blob["formats"] = tuple(out_blob["formats"])
        return cls(model=model,
                   case=blob.get("case", "dependent"),
                   flipflop=FlipFlopConfig(**blob.get("flipflop", {})),
                   bootstrap=BootstrapConfig(**blob.get("bootstrap", {})),
                   selection=SelectionConfig(models=models,
                                             references=tuple(refs)),
                   output=OutputConfig(**out_blob),
                   verbose=bool(blob.get("verbose", False)))

    def to_dict(self):
        return {
            "model": self.model.label(),
            "case": self.case,
            "flipflop": {"enabled": self.flipflop.enabled,
                         "eps1": self.flipflop.eps1,
                         "eps2": self.flipflop.eps2,
                         "max_iter": self.flipflop.max_iter},
            "bootstrap": {"size": self.bootstrap.size,
                          "seed": self.bootstrap.seed},
            "selection": {"models": [m.label() for m in self.selection.models],
                          "references": [lab for lab, _ in
                                         self.selection.references]},
            # the destination is an environment detail: leaving it out keeps
            # reports byte-identical no matter where they are written
            "output": {"formats": list(self.output.formats)},
            "verbose": self.verbose,
        }


@dataclass
class AnalysisReport:
    """Everything one run produced, plus the per-stage errors."""

    config: AnalysisConfig
    master_seed: int
    groups: list
    estimates: dict
    flipflop: dict
    formdiff: dict
    selection: object
    stage_seeds: dict
    errors: list
    intermediates: dict = field(default_factory=dict)

    def to_dict(self):
        verbose = self.config.verbose
        est_blob = {}
        for name, est in self.estimates.items():
            ent = {"M": est.M, "sigmaK": est.sigmaK, "mu": est.mu,
                   "sigmaD": est.sigmaD}
            if verbose:
                ent.update(self.intermediates.get(name, {}))
                ent["diagnostics"] = est.diagnostics
            est_blob[name] = ent
        ff_blob = {}
        for name, ff in self.flipflop.items():
            ent = {"sigmaK": ff.sigmaK, "sigmaD": ff.sigmaD,
                   "iterations": ff.iterations, "converged": ff.converged}
            if verbose:
                ent["deltas"] = ff.deltas
            ff_blob[name] = ent
        blob = {
            "schema_version": "1",
            "master_seed": self.master_seed,
            "config": self.config.to_dict(),
            "groups": self.groups,
            "estimates": est_blob,
            "flipflop": ff_blob,
            "formdiff": {f"{a}|{b}": res.to_dict()
                         for (a, b), res in self.formdiff.items()},
            "selection": self.selection.to_dict() if self.selection else None,
            "stage_seeds": self.stage_seeds,
            "errors": self.errors,
        }
        return json_sanitize(blob)


def _align_columns(mu_raw, target):
    # reconstruction fixes coordinates only up to an orthogonal map; rotate
    # them onto the centered sample mean so residual-based stages can run
    u, _, vt = np.linalg.svd(mu_raw.T @ target)
    return mu_raw @ (u @ vt)


def run_analysis(data, cfg):
    """Run all stages over the groups and collect an AnalysisReport."""
    groups = list(data)
    if not groups:
        raise ValueError("no groups to analyze")
    names = [g.name for g in groups]
    if len(set(names)) != len(names):
        raise ValueError("group names must be distinct")

    est_fn = estimate_dependent if cfg.case == "dependent" \
        else estimate_independent
    master = cfg.bootstrap.seed
    errors = []
    estimates = {}
    flip = {}
    formdiff = {}
    intermediates = {}
    stage_seeds = {}
    sample_cache = {}

    for g in groups:
        stage = f"estimate:{g.name}"
        try:
            centered = center_sample(g.specimens)
            sm = sample_moments(gram_matrices(centered))
            est = est_fn(sm, cfg.model, g.D)
            estimates[g.name] = est
            intermediates[g.name] = {"Bbar": sm.Bbar,
                                     "S_diag": np.diag(sm.S)}
            sample_cache[g.name] = (centered, sm)
            if not np.isfinite(est.M).all():
                errors.append({"stage": stage,
                               "message": "mean product estimate has "
                                          "non-finite entries"})
                continue
            h = centering_matrix(g.K)
            mu_raw = reconstruct_mean_form(h @ est.M @ h, g.D, strict=False)
            est.mu = _align_columns(mu_raw, np.mean(centered, axis=0))
        except (ValueError, np.linalg.LinAlgError) as exc:
            errors.append({"stage": stage, "message": str(exc)})

    if cfg.flipflop.enabled:
        for g in groups:
            stage = f"flipflop:{g.name}"
            est = estimates.get(g.name)
            if est is None or est.mu is None:
                errors.append({"stage": stage,
                               "message": "no mean estimate to refine"})
                continue
            try:
                centered, _ = sample_cache[g.name]
                ff = flipflop(centered, est.mu, _psd_clip(est.sigmaK),
                              eps1=cfg.flipflop.eps1, eps2=cfg.flipflop.eps2,
                              max_iter=cfg.flipflop.max_iter)
                flip[g.name] = ff
                est.sigmaD = ff.sigmaD
            except (ValueError, np.linalg.LinAlgError) as exc:
                errors.append({"stage": stage, "message": str(exc)})

    for i in range(len(groups)):
        for j in range(i + 1, len(groups)):
            gx, gy = groups[i], groups[j]
            label = f"bootstrap:{gx.name}:{gy.name}"
            sseed = stage_seed(master, label)
            stage_seeds[label] = sseed
            stage = f"formdiff:{gx.name}:{gy.name}"
            try:
                formdiff[(gx.name, gy.name)] = bootstrap_test(
                    gx, gy, cfg.model, case=cfg.case,
                    boot_size=cfg.bootstrap.size, seed=sseed)
            except (ValueError, np.linalg.LinAlgError) as exc:
                errors.append({"stage": stage, "message": str(exc)})

    selection = None
    if cfg.selection.models:
        stage = "selection"
        try:
            fits = []
            for model in cfg.selection.models:
                ests = {}
                for g in groups:
                    if g.name not in sample_cache:
                        raise ValueError(
                            f"group {g.name!r} has no usable sample moments")
                    _, sm = sample_cache[g.name]
                    ests[g.name] = est_fn(sm, model, g.D)
                fits.append((model.label(), ests))
            selection = build_selection_report(
                fits, references=cfg.selection.references, d=groups[0].D)
        except (ValueError, np.linalg.LinAlgError) as exc:
            errors.append({"stage": stage, "message": str(exc)})

    summary = [{"name": g.name, "n": g.n, "landmarks": g.K, "dims": g.D}
               for g in groups]
    return AnalysisReport(config=cfg, master_seed=master, groups=summary,
                          estimates=estimates, flipflop=flip,
                          formdiff=formdiff, selection=selection,
                          stage_seeds=stage_seeds, errors=errors,
                          intermediates=intermediates)


def load_report_schema():
    """JSON schema describing the emitted report.json."""
    text = resources.files("ellipform").joinpath(
        "report_schema.json").read_text()
    return json.loads(text)


def _safe_name(name):
    return "".join(ch if ch.isalnum() or ch in "-_" else "_" for ch in name)


def _correlation(sigma):
    s = _psd_clip(sigma)
    dd = np.diag(s).copy()
    with np.errstate(invalid="ignore", divide="ignore"):
        corr = s / np.sqrt(np.outer(dd, dd))
    ok = np.isfinite(dd) & (dd > 0)
    for i in np.nonzero(ok)[0]:
        corr[i, i] = 1.0
    return corr


def _write_matrix(path, mat):
    np.savetxt(path, np.atleast_2d(np.asarray(mat, dtype=float)),
               delimiter=",", fmt="%.17g")


_PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]


def _svg_mean_forms(forms):
    """Scatter of the estimated mean forms; K labeled points per group."""
    pts = []
    for name, mu in forms:
        xy = np.asarray(mu, dtype=float)
        if xy.shape[1] == 1:
            xy = np.hstack([xy, np.zeros_like(xy)])
        pts.append((name, xy[:, :2]))
    allxy = np.vstack([xy for _, xy in pts])
    lo = allxy.min(axis=0)
    span = np.maximum(allxy.max(axis=0) - lo, 1e-9)
    side = 560.0
    scale = side / span.max()

    def place(p):
        x = 40.0 + (p[0] - lo[0]) * scale
        y = 40.0 + side - (p[1] - lo[1]) * scale
        return x, y

    parts = ['<svg xmlns="http://www.w3.org/2000/svg" '
             'viewBox="0 0 640 680" font-family="sans-serif">',
             '<rect width="640" height="680" fill="white"/>']
    for gi, (name, xy) in enumerate(pts):
        color = _PALETTE[gi % len(_PALETTE)]
        parts.append(f'<text x="40" y="{660 + 0:.0f}" fill="{color}" '
                     f'font-size="14" dx="{gi * 120}">{name}</text>')
        for li, p in enumerate(xy):
            x, y = place(p)
            parts.append(f'<circle cx="{x:.3f}" cy="{y:.3f}" r="5" '
                         f'fill="{color}" fill-opacity="0.8"/>')
            parts.append(f'<text class="lm" x="{x + 7:.3f}" y="{y - 7:.3f}" '
                         f'font-size="12" fill="{color}">{li + 1}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def emit_report(report, cfg=None):
    """Write report.json, CSV tables, and SVG plots per the output config.

    Returns the list of written paths.  Identical reports serialize to
    identical bytes (sorted keys, fixed separators, no timestamps).
    """
    cfg = report.config if cfg is None else cfg
    out = cfg.output.dir
    os.makedirs(out, exist_ok=True)
    written = []

    if "json" in cfg.output.formats:
        path = os.path.join(out, "report.json")
        text = json.dumps(report.to_dict(), sort_keys=True,
                          separators=(",", ":")) + "\n"
        with open(path, "w") as fh:
            fh.write(text)
        written.append(path)

    if "csv" in cfg.output.formats:
        tables = os.path.join(out, "tables")
        os.makedirs(tables, exist_ok=True)
        for name in sorted(report.estimates):
            est = report.estimates[name]
            safe = _safe_name(name)
            inter = report.intermediates.get(name, {})
            if "Bbar" in inter:
                _write_matrix(os.path.join(tables, f"Bbar_{safe}.csv"),
                              inter["Bbar"])
                written.append(os.path.join(tables, f"Bbar_{safe}.csv"))
            _write_matrix(os.path.join(tables, f"sigmaK_{safe}.csv"),
                          est.sigmaK)
            written.append(os.path.join(tables, f"sigmaK_{safe}.csv"))
            if np.isfinite(est.sigmaK).all():
                _write_matrix(os.path.join(tables, f"corr_{safe}.csv"),
                              _correlation(est.sigmaK))
                written.append(os.path.join(tables, f"corr_{safe}.csv"))
        for (a, b), res in sorted(report.formdiff.items()):
            tag = f"{_safe_name(a)}__{_safe_name(b)}"
            _write_matrix(os.path.join(tables, f"fdm_{tag}.csv"), res.fdm)
            written.append(os.path.join(tables, f"fdm_{tag}.csv"))
            boot = np.asarray(res.boot_T, dtype=float).reshape(-1, 1)
            _write_matrix(os.path.join(tables, f"boot_T_{tag}.csv"), boot)
            written.append(os.path.join(tables, f"boot_T_{tag}.csv"))
        sel = report.selection
        if sel is not None:
            _write_matrix(os.path.join(tables, "selection_cov_dist.csv"),
                          sel.cov_dist)
            _write_matrix(os.path.join(tables, "selection_shape_dist.csv"),
                          sel.shape_dist)
            with open(os.path.join(tables, "selection_cv.csv"), "w") as fh:
                fh.write("model,cv_pct\n")
                for lab in sel.models:
                    val = sel.cv_pct[lab]
                    fh.write("%s,%s\n" % (lab, "" if val is None
                                          else "%.17g" % val))
            written += [os.path.join(tables, f) for f in
                        ("selection_cov_dist.csv", "selection_shape_dist.csv",
                         "selection_cv.csv")]

    if "svg" in cfg.output.formats:
        forms = [(name, report.estimates[name].mu)
                 for name in sorted(report.estimates)
                 if report.estimates[name].mu is not None]
        if forms:
            plots = os.path.join(out, "plots")
            os.makedirs(plots, exist_ok=True)
            path = os.path.join(plots, "mean_forms.svg")
            with open(path, "w") as fh:
                fh.write(_svg_mean_forms(forms))
            written.append(path)

    return written
