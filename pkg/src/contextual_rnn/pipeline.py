"""Pipeline stages, artifact bookkeeping and the run manifest.

Every stage reads its inputs from the output directory, writes its artifacts
there and records both (with SHA-256 digests) in ``manifest.json``.  A stage
is skipped when the manifest shows it finished under the same config and
neither its artifacts nor its inputs have changed, so deleting one stage's
files and re-running regenerates that stage only.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__
from . import baselines as bl
from . import bilinear as bil
from . import context as ctx
from . import experiments as ex
from . import toy
from .cells import final_logits, load_params, readout, run_batch, save_params
from .config import ExperimentConfig
from .fixed_points import FixedPoint, LineAttractor, assemble_line_attractor, speeds
from .linear_analysis import eig, eod_transient_analysis, timescales
from .linearize import jacobians, linearize
from .train import TrainConfig, accuracy, shuffle_tokens, train_classifier, train_toy

log = logging.getLogger(__name__)

STAGES = ("generate", "train", "fps", "analyze", "bilinear", "baseline", "report")
MANIFEST = "manifest.json"

TOY_PHRASES = (("good",), ("extremely", "good"), ("not", "good"), ("not", "the", "the", "the", "good"))


class MissingArtifactError(FileNotFoundError):
    pass


# ------------------------------------------------------------------ file io

def sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def write_csv(path: Path, header, rows) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(csv_text(header, rows))
    return path


def read_csv(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_json(path: Path, obj) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=1, sort_keys=True, default=_json_default) + "\n")
    return path


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    if isinstance(o, complex):
        return [o.real, o.imag]
    raise TypeError(f"not serialisable: {type(o)}")


# ---------------------------------------------------------------- manifest

class Run:
    """An output directory plus its manifest."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.root = Path(cfg.out_dir)
        self.digest = cfg.digest()
        self.manifest = self._load()

    def _load(self) -> dict:
        path = self.root / MANIFEST
        fresh = {"tool_version": __version__, "config_hash": self.digest,
                 "config": self.cfg.model_dump(mode="json", exclude={"out_dir"}), "stages": {}}
        if not path.exists():
            return fresh
        try:
            m = json.loads(path.read_text())
        except json.JSONDecodeError:
            return fresh
        if m.get("config_hash") != self.digest or m.get("tool_version") != __version__:
            return fresh
        m["config"] = fresh["config"]
        return m

    def save(self) -> None:
        self.root.mkdir(parents=True, exist_ok=True)
        write_json(self.root / MANIFEST, self.manifest)

    def path(self, rel: str) -> Path:
        return self.root / rel

    def require(self, rel: str) -> Path:
        p = self.path(rel)
        if not p.exists():
            raise MissingArtifactError(f"missing upstream artifact: {p}")
        return p

    def up_to_date(self, stage: str, inputs: list[str]) -> bool:
        rec = self.manifest["stages"].get(stage)
        if not rec or rec.get("status") != "done":
            return False
        for rel, digest in rec["artifacts"].items():
            p = self.path(rel)
            if not p.exists() or sha256(p) != digest:
                return False
        for rel, digest in rec["inputs"].items():
            p = self.path(rel)
            if not p.exists() or sha256(p) != digest:
                return False
        return set(rec["inputs"]) == set(inputs)

    def record(self, stage: str, inputs: list[str], artifacts: list[Path]) -> None:
        rels = sorted(str(a.relative_to(self.root)) for a in artifacts)
        self.manifest["stages"][stage] = {
            "status": "done",
            "inputs": {rel: sha256(self.path(rel)) for rel in sorted(inputs)},
            "artifacts": {rel: sha256(self.path(rel)) for rel in rels},
        }
        self.save()

    def artifacts(self) -> list[str]:
        out = []
        for rec in self.manifest["stages"].values():
            out += list(rec["artifacts"])
        return sorted(out)


# ------------------------------------------------------------- shared state

def _train_config(cfg: ExperimentConfig) -> TrainConfig:
    t = cfg.train
    return TrainConfig(learning_rate=t.learning_rate, lr_decay=t.lr_decay, batch_size=t.batch_size,
                       max_epochs=t.max_epochs, clip_norm=t.clip_norm, l2=t.l2, dropout=t.dropout,
                       seed=cfg.seed, patience=t.patience, val_fraction=t.val_fraction,
                       target_mse=t.target_mse if cfg.mode == "toy" else None,
                       state_noise=t.state_noise)


def _seed(cfg: ExperimentConfig, k: int) -> int:
    return cfg.seed * 100_003 + k


def load_attractor(run: Run, p) -> tuple[LineAttractor, dict]:
    d = json.loads(run.require("fps/attractor.json").read_text())
    pts = []
    for h in np.array(d["states"], float):
        s = float(speeds(p, h[None])[0])
        pts.append(FixedPoint(h, 0.5 * s * s, s, float(readout(p, h)), linearize(p, h)))
    return assemble_line_attractor(pts), d


def _labelled(run: Run, name: str):
    ex_ = toy.read_corpus(run.require(f"data/{name}.jsonl"))
    return [e.tokens for e in ex_], [e.label for e in ex_]


def _modifiers(run: Run) -> list[int]:
    rows = read_csv(run.require("analysis/modifier_ranking.csv"))
    scores = {int(r["word_id"]): float(r["norm"]) for r in rows}
    return bl.extract_modifier_list(scores, 2, len(toy.VOCAB))


# ------------------------------------------------------------------ stages

def stage_generate(run: Run) -> list[Path]:
    cfg = run.cfg
    d = cfg.data
    out = []
    corpora = {
        "toy_train": toy.generate_toy_corpus(_seed(cfg, 1), d.n_train, d.length),
        "classify_train": toy.generate_classification_corpus(_seed(cfg, 2), d.n_classify, d.length),
        "classify_test": toy.generate_classification_corpus(_seed(cfg, 3), d.n_classify_test, d.length),
        "fp_init": toy.generate_toy_corpus(_seed(cfg, 4), cfg.fixed_points.n_init_sequences, d.length),
    }
    rows = []
    for name, corpus in corpora.items():
        path = run.path(f"data/{name}.jsonl")
        path.parent.mkdir(parents=True, exist_ok=True)
        toy.write_corpus(path, corpus)
        out.append(path)
        back = toy.read_corpus(path)
        bad = 0
        for e in back:
            oracle = toy.oracle_targets(e.tokens)
            if hasattr(e, "targets"):
                bad += list(e.targets) != oracle
            else:
                bad += (oracle[-1] > 0) != bool(e.label)
            bad += not toy.check_constraints(e.tokens)
        rows.append((name, len(back), bad))
    out.append(write_csv(run.path("data/oracle_check.csv"), ["corpus", "n_examples", "n_violations"], rows))
    return out


def stage_train(run: Run) -> list[Path]:
    cfg = run.cfg
    tc = _train_config(cfg)
    V = toy.VOCAB
    if cfg.mode == "toy":
        corpus = toy.read_corpus(run.require("data/toy_train.jsonl"))
        res = train_toy(cfg.cell, corpus, tc, cfg.hidden_size, len(V), V.pad_id)
    else:
        corpus = toy.read_corpus(run.require("data/classify_train.jsonl"))
        res = train_classifier(cfg.cell, corpus, tc, cfg.hidden_size, len(V), V.pad_id)
    out = []
    path = run.path("model/rnn.json")
    path.parent.mkdir(parents=True, exist_ok=True)
    save_params(res.params, path)
    out.append(path)
    keys = sorted({k for h in res.history for k in h})
    out.append(write_csv(run.path("train/history.csv"), keys, [[h.get(k, "") for k in keys] for h in res.history]))
    rows = []
    for words in TOY_PHRASES:
        ids = V.encode(words)
        logit = float(final_logits(res.params, [ids])[0])
        rows.append((" ".join(words), toy.oracle_targets(ids)[-1], logit))
    out.append(write_csv(run.path("train/toy_phrases.csv"), ["phrase", "target", "logit"], rows))
    out.append(write_json(run.path("train/metrics.json"), {**res.metrics, "epochs": len(res.history)}))
    return out


def stage_fps(run: Run) -> list[Path]:
    cfg = run.cfg
    f = cfg.fixed_points
    p = load_params(run.require("model/rnn.json"))
    seqs = [e.tokens for e in toy.read_corpus(run.require("data/fp_init.jsonl"))]
    ar = ex.locate_attractor(p, seqs, f.n_inits, _seed(cfg, 5), tol=f.tol, analysis_tol=f.analysis_tol,
                             max_iters=f.max_iters, lr=f.lr, merge_radius=f.merge_radius,
                             polish_iters=f.polish_iters)
    att = ar.attractor
    out = []
    rows, report, eig_rows = [], [], []
    strict_ids = {id(fp) for fp in ar.strict}
    listed = list(ar.strict) + [fp for fp in att.points if id(fp) not in strict_ids and ar.tier != "strict"]
    listed.sort(key=lambda fp: fp.readout)
    for i, fp in enumerate(listed):
        es = eig(fp.lin.J_rec)
        tier = "strict" if fp.speed < f.tol else "analysis"
        n_int = int(np.sum(np.abs(es.values - 1) < 0.05))
        rows.append((i, tier, fp.speed, fp.q, fp.readout, n_int, float(np.abs(es.values).max())))
        report.append({"index": i, "tier": tier, "speed": fp.speed, "readout": fp.readout,
                       "h_star": fp.h_star, "eigenvalues": [[v.real, v.imag] for v in es.values]})
        for a, v in enumerate(es.values):
            eig_rows.append((i, a, v.real, v.imag, abs(v)))
    out.append(write_csv(run.path("fps/fixed_points.csv"),
                         ["index", "tier", "speed", "q", "readout", "n_integration_modes", "max_abs_eigenvalue"], rows))
    out.append(write_csv(run.path("fps/eigenvalues.csv"), ["point", "mode", "real", "imag", "abs"], eig_rows))
    out.append(write_json(run.path("fps/report.json"), {"format_version": 1, "points": report}))
    out.append(write_json(run.path("fps/attractor.json"), {
        "format_version": 1, "tier": ar.tier, "tol": ar.tier_tol, "states": att.states,
        "direction": att.direction, "pc1_fraction": att.pc1_fraction,
        "readout_span": list(att.readout_span)}))
    check = ex.fixed_point_check(ar.strict, f.tol)
    out.append(write_json(run.path("fps/summary.json"), {
        "strict_check": check, "tier": ar.tier, "n_inits": ar.search.n_inits,
        "n_attractor_points": len(att), "attractor_pc1_fraction": att.pc1_fraction}))
    return out


def _classifier_eval_set(run: Run):
    return _labelled(run, "classify_test")


def stage_analyze(run: Run) -> list[Path]:
    cfg = run.cfg
    a = cfg.analysis
    V = toy.VOCAB
    p = load_params(run.require("model/rnn.json"))
    att, _ = load_attractor(run, p)
    h_star = ex.reference_state(att)
    probes = ctx.toy_probe_words(V)
    out = []

    # modifier identification
    ranking = ctx.rank_modifiers(p, list(range(len(V))), h_star, a.threshold)
    sel = {r.word for r in ranking.selected}
    out.append(write_csv(run.path("analysis/modifier_ranking.csv"), ["word_id", "word", "norm", "selected"],
                         [(r.word, V.tokens[r.word].word, r.norm, r.word in sel) for r in ranking.ranked]))
    counts, edges = ranking.histogram(bins=10)
    out.append(write_csv(run.path("analysis/modifier_histogram.csv"), ["bin_lo", "bin_hi", "count"],
                         [(edges[i], edges[i + 1], int(c)) for i, c in enumerate(counts)]))
    mods = bl.extract_modifier_list(ranking.norms, 2, len(V))

    # barcodes: one file per context, one row per probe
    contexts = [(V.tokens[m].word, ctx.h_after(p, h_star, m)) for m in mods] + [("h0", p.h0)]
    for name, h in contexts:
        bc = ctx.barcode(p, h, probes, h_star)
        out.append(write_csv(run.path(f"analysis/barcode_{name}.csv"), ["probe_id", "probe", "valence", "value"],
                             [(t, V.tokens[t].word, V.valences[t], v) for t, v in zip(bc.probes, bc.values)]))

    # linearisation quality and mode removal
    lr_rows = ex.linear_ratios(p, h_star, mods, probes)
    out.append(write_csv(run.path("analysis/linear_ratio.csv"), ["modifier", "probe", "linear", "nonlinear", "ratio"],
                         [(r["modifier"], r["probe"], r["linear"], r["nonlinear"], r["ratio"]) for r in lr_rows]))
    mr_rows = []
    for m in mods:
        r = ex.mode_removal(p, h_star, m, probes)
        mr_rows.append((m, V.tokens[m].word, " ".join(map(str, r["modes"])),
                        " ".join(f"{v.real:.6g}{v.imag:+.6g}j" for v in r["eigenvalues"]),
                        float(np.linalg.norm(r["before"])), float(np.linalg.norm(r["after"])), r["reduction"]))
    out.append(write_csv(run.path("analysis/mode_removal.csv"),
                         ["modifier", "word", "modes", "eigenvalues", "effect_before", "effect_after", "reduction"], mr_rows))

    # modifier subspace and impulse responses
    states = ex.deflection_samples(p, h_star, mods, a.impulse_samples)
    D = np.array(states) - h_star
    direction = ex.attractor_direction(p, att, a.direction)
    sub_v = ctx.fit_modifier_subspace(D, direction, a.P_visual)
    sub_p = ctx.fit_modifier_subspace(D, direction, a.P_perturb)
    out.append(write_csv(run.path("analysis/subspace.csv"), ["P", "component", "variance_explained"],
                         [(s.P, k, v) for s in (sub_v, sub_p) for k, v in enumerate(s.variance_explained)]))
    out.append(write_json(run.path("analysis/subspace.json"), {"format_version": 1, "h_star": h_star,
                                                                "visual": sub_v.components, "perturb": sub_p.components,
                                                                "direction": direction}))
    imp_rows, fit_rows, proj_rows = [], [], []
    for m in mods:
        ir = ctx.impulse_response(p, m, a.n_pads, h_star, att, sub_v, a.floor_frac, a.fit_steps)
        for k in range(len(ir.distance)):
            imp_rows.append((m, V.tokens[m].word, k, ir.distance[k], *ir.projections[k]))
        fit_rows.append((m, V.tokens[m].word, ir.distance_timescale, ctx.fit_decay(ir.distance),
                         ctx.persistence(ir.distance), *ir.timescales))
    for t in range(len(V)):
        d = ctx.h_after(p, h_star, t) - h_star
        proj_rows.append((t, V.tokens[t].word, *sub_v.project(d)))
    pcols = [f"m{k + 1}" for k in range(sub_v.P)]
    out.append(write_csv(run.path("analysis/impulse.csv"), ["modifier", "word", "step", "distance", *pcols], imp_rows))
    out.append(write_csv(run.path("analysis/impulse_fit.csv"),
                         ["modifier", "word", "distance_tau", "decay_tau", "persistence", *[f"tau_{c}" for c in pcols]],
                         fit_rows))
    out.append(write_csv(run.path("analysis/subspace_projections.csv"), ["word_id", "word", *pcols], proj_rows))

    # perturbation experiments on the labelled test set
    seqs, labels = _classifier_eval_set(run)
    base = ctx._acc(final_logits(p, seqs), labels)
    pert = ctx.project_out_subspace_eval(p, seqs, labels, sub_p.components, att)
    rand = ctx.project_out_subspace_eval(p, seqs, labels, ctx.random_subspace(p.state_size, sub_p.P, _seed(cfg, 6)), att)
    shuf = accuracy(p, shuffle_tokens(seqs, _seed(cfg, 7)), labels)
    h0 = ctx.h0_analysis(p, sub_p, h_star, seqs, labels, probes, _seed(cfg, 8))
    eod = ctx.eod_pad_eval(p, seqs, labels, a.eod_pads)
    out.append(write_csv(run.path("analysis/perturbation.csv"), ["condition", "accuracy", "delta"], [
        ("baseline", base, 0.0), ("modifier_subspace", pert.accuracy, pert.accuracy - base),
        ("random_subspace", rand.accuracy, rand.accuracy - base), ("shuffled", shuf, shuf - base),
        ("h0_projected", h0.perturbed_accuracy, h0.perturbed_accuracy - base),
        ("h0_random", h0.random_accuracy, h0.random_accuracy - base),
        (f"eod_pad_{a.eod_pads}", base + eod, eod)]))
    n_tr = min(3, len(seqs))
    _, base_tr = run_batch(p, np.array(seqs[:n_tr]))
    tr_rows = []
    for i in range(n_tr):
        targ = toy.oracle_targets(seqs[i])
        for t in range(len(seqs[i])):
            tr_rows.append((i, t, targ[t], base_tr[i, t], pert.traces[i][t]))
    out.append(write_csv(run.path("analysis/logit_traces.csv"),
                         ["example", "step", "target", "logit", "logit_projected"], tr_rows))

    # end-of-document transient modes at the reference point
    rep = eod_transient_analysis(p, h_star, probes, n_steps=a.n_pads, n_select=a.n_transient_modes)
    t_rows = []
    for k, u in enumerate(rep.units):
        lam = rep.eigen.values[u[0]]
        t_rows.append((k, " ".join(map(str, u)), lam.real, lam.imag, rep.unit_timescale[k],
                       rep.unit_readout_projection[k], float(np.abs(rep.instantaneous_change[:, k]).mean()),
                       k in rep.selected))
    out.append(write_csv(run.path("analysis/transient_modes.csv"),
                         ["unit", "modes", "real", "imag", "timescale", "readout_projection",
                          "mean_abs_instant_change", "selected"], t_rows))
    s_rows = []
    for i, t in enumerate(probes):
        for k in range(len(rep.steps)):
            s_rows.append((t, V.tokens[t].word, k, rep.step_response[i, k], rep.step_response_removed[i, k],
                           rep.nonlinear_response[i, k]))
    out.append(write_csv(run.path("analysis/step_response.csv"),
                         ["probe_id", "probe", "step", "linear", "linear_removed", "nonlinear"], s_rows))

    # state-space picture: PCA of trajectories with the attractor overlaid
    traj, _ = run_batch(p, np.array(seqs[:20]))
    X = traj.reshape(-1, p.state_size)
    mu = X.mean(0)
    _, _, Vt = np.linalg.svd(X - mu, full_matrices=False)
    pc = Vt[:2]
    pc *= np.where(np.sign(pc @ np.pad(p.w, (0, p.state_size - p.hidden_size))) < 0, -1, 1)[:, None]
    pca_rows = [("trajectory", i // traj.shape[1], *((x - mu) @ pc.T), float(readout(p, x))) for i, x in enumerate(X)]
    pca_rows += [("attractor", -1, *((h - mu) @ pc.T), r) for h, r in zip(att.states, att.readouts)]
    out.append(write_csv(run.path("analysis/state_space.csv"), ["kind", "example", "pc1", "pc2", "readout"], pca_rows))

    J_rec, _ = jacobians(p, h_star, np.zeros(p.input_size))
    vals = eig(J_rec).values
    out.append(write_csv(run.path("analysis/eigen_timescales.csv"), ["mode", "real", "imag", "abs", "timescale"],
                         [(k, v.real, v.imag, abs(v), t) for k, (v, t) in enumerate(zip(vals, timescales(vals)))]))

    summary = {
        "reference_readout": float(readout(p, h_star)), "modifiers": mods,
        "mean_abs_linear_ratio": float(np.mean([abs(r["ratio"]) for r in lr_rows])),
        "mode_removal_reduction": {str(r[0]): r[-1] for r in mr_rows},
        "subspace_variance_visual": sub_v.variance_explained, "accuracy": base,
        "modifier_subspace_delta": pert.accuracy - base, "random_subspace_delta": rand.accuracy - base,
        "shuffle_delta": shuf - base, "h0_projection": h0.projection, "eod_pad_delta": eod,
        "transient_selected_units": rep.selected,
    }
    out.append(write_json(run.path("analysis/summary.json"), summary))
    return out


def stage_bilinear(run: Run) -> list[Path]:
    cfg = run.cfg
    p = load_params(run.require("model/rnn.json"))
    att, _ = load_attractor(run, p)
    h_star = ex.reference_state(att)
    mods = _modifiers(run)
    states = ex.deflection_samples(p, h_star, mods, cfg.analysis.impulse_samples)
    curve = ex.bilinear_curve(p, h_star, states, cfg.bilinear.P_max)
    out = [write_csv(run.path("bilinear/variance.csv"), ["P", "variance_explained"], list(enumerate(curve)))]
    P = min(cfg.bilinear.P, len(curve) - 1)
    model, ve = ex.fit_toy_bilinear(p, h_star, states, P)
    path = run.path("bilinear/model.json")
    bil.save_model(model, path)
    out.append(path)
    W = bil.modifier_word_weights(model, p.w)
    V = toy.VOCAB
    out.append(write_csv(run.path("bilinear/word_weights.csv"), ["component", "word_id", "word", "weight"],
                         [(k, t, V.tokens[t].word, W[k, t]) for k in range(model.P) for t in range(len(V))]))
    return out


def stage_baseline(run: Run) -> list[Path]:
    cfg = run.cfg
    b = cfg.baseline
    V = toy.VOCAB
    tr_s, tr_l = _labelled(run, "classify_train")
    te_s, te_l = _labelled(run, "classify_test")
    mods = tuple(_modifiers(run))
    p = load_params(run.require("model/rnn.json"))
    out, rows = [], []
    tcfg = bl.BaselineTrainConfig(epochs=b.epochs, batch_size=b.batch_size, n_trials=b.n_trials,
                                  seed=_seed(cfg, 9), grid=b.grid())
    for variant in b.variants:
        spec = bl.BaselineSpec(variant, len(V), mods, b.P)
        res = bl.train_baseline(spec, tr_s, tr_l, tcfg, test=(te_s, te_l), pad_id=V.pad_id)
        path = run.path(f"baseline/{variant}.json")
        path.parent.mkdir(parents=True, exist_ok=True)
        bl.save_baseline(res, path)
        out.append(path)
        rows.append((variant, bl.VARIANT_LABELS[variant], bl.param_count(res.weights), spec.expected_param_count(),
                     res.val_accuracy, res.test_accuracy))
    rnn_acc = accuracy(p, te_s, te_l)
    rows.append(("rnn", f"{cfg.cell.upper()} (analysed network)", int(sum(v.size for v in p.arrays.values())), "",
                 "", rnn_acc))
    out.append(write_csv(run.path("baseline/accuracy.csv"),
                         ["variant", "label", "params", "expected_params", "val_accuracy", "test_accuracy"], rows))
    return out


def stage_report(run: Run) -> list[Path]:
    from .report import build_figures
    return build_figures(run)


STAGE_FUNCS: dict[str, Callable[[Run], list[Path]]] = {
    "generate": stage_generate, "train": stage_train, "fps": stage_fps, "analyze": stage_analyze,
    "bilinear": stage_bilinear, "baseline": stage_baseline, "report": stage_report,
}

STAGE_INPUTS: dict[str, list[str]] = {
    "generate": [],
    "train": ["data/toy_train.jsonl", "data/classify_train.jsonl"],
    "fps": ["model/rnn.json", "data/fp_init.jsonl"],
    "analyze": ["model/rnn.json", "fps/attractor.json", "data/classify_test.jsonl"],
    "bilinear": ["model/rnn.json", "fps/attractor.json", "analysis/modifier_ranking.csv"],
    "baseline": ["model/rnn.json", "data/classify_train.jsonl", "data/classify_test.jsonl",
                 "analysis/modifier_ranking.csv"],
    "report": ["train/history.csv", "analysis/state_space.csv", "analysis/logit_traces.csv",
               "analysis/modifier_histogram.csv", "analysis/impulse.csv", "analysis/subspace_projections.csv",
               "analysis/eigen_timescales.csv", "analysis/modifier_ranking.csv", "bilinear/variance.csv",
               "baseline/accuracy.csv"],
}


def run_stage(run: Run, stage: str, force: bool = False) -> bool:
    """Run one stage unless it is up to date; returns True when it ran."""
    inputs = STAGE_INPUTS[stage]
    if not force and run.up_to_date(stage, inputs):
        log.info("stage %s is up to date", stage)
        return False
    for rel in inputs:
        run.require(rel)
    log.info("running stage %s", stage)
    run.manifest["stages"].pop(stage, None)
    artifacts = STAGE_FUNCS[stage](run)
    run.record(stage, inputs, artifacts)
    return True


def run_all(run: Run, force: bool = False) -> list[str]:
    return [s for s in STAGES if run_stage(run, s, force)]
