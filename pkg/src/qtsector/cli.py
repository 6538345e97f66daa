"""Command-line interface.

Subcommands: validate, decompose, simulate, analyze, pipeline.  All outputs
are deterministic given the root seed (reports embed the tolerances and the
config hash, never wall-clock time), so identical invocations produce
byte-identical files.

Exit codes: 0 success, 1 input error, 2 validation/invariant failure,
3 numerical failure.
"""

import argparse
import csv
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, analysis, corpus, invariant, sectors, trajectory
from . import instrument as inst

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3


def _write_json(path: Path, data: dict):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(data, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _load_state(path: str, dim: int) -> np.ndarray:
    with open(path) as fh:
        data = json.load(fh)
    rho = inst._matrix_from_json(data["matrix"], int(data.get("dim", dim)))
    return inst.check_state(rho)


def _tolerances(args) -> dict:
    return {
        "tol_channel": args.tol_channel,
        "tol_supp": args.tol_supp,
        "tol_fix": args.tol_fix,
        "tol_law": args.tol_law,
        "tol_class": args.tol_class,
        "p_floor": args.p_floor,
    }


def _load(args):
    path = Path(args.instrument)
    if not path.exists() and path.stem in corpus.CORPUS and not path.suffix:
        return corpus.corpus_instrument(path.stem)
    return inst.load_instrument(path)


def _decompose(instr, args):
    structure = invariant.compute_structure(instr, split_seed=args.seed,
                                            tol_fix=args.tol_fix)
    decomp = sectors.build_sectors(instr, structure, l_eq=args.l_eq,
                                   tol_law=args.tol_law)
    if decomp.n_sectors >= 2:
        n, _ = sectors.identifiability_horizon(instr, decomp, n_max=args.n_max,
                                               seed=args.seed, tol_law=args.tol_law)
        decomp.horizon = n
        if n is not None:
            k, state, _ = sectors.kappa(instr, decomp, n, seed=args.seed)
            decomp.kappa = k
            decomp.kappa_state = state
    return structure, decomp


def cmd_validate(args) -> int:
    try:
        instr = _load(args)
    except (OSError, json.JSONDecodeError, inst.ValidationError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    report = inst.validate(instr, args.tol_channel)
    data = report.to_dict()
    data["tolerances"] = _tolerances(args)
    if args.out:
        _write_json(Path(args.out) / "validation.json", data)
    print(f"validate {instr.name}: deficit {report.deficit:.3e} "
          f"({'pass' if report.passed else 'FAIL'})")
    return EXIT_OK if report.passed else EXIT_VALIDATION


def cmd_decompose(args) -> int:
    try:
        instr = _load(args).validated(args.tol_channel)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except inst.ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        structure, decomp = _decompose(instr, args)
    except (invariant.StructureError, sectors.SectorError) as exc:
        print(f"invariant failure: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    out = Path(args.out)
    sd = structure.to_dict()
    sd["tolerances"] = _tolerances(args)
    _write_json(out / "structure.json", sd)
    dd = decomp.to_dict()
    dd["tolerances"] = _tolerances(args)
    _write_json(out / "sectors.json", dd)
    print(f"decompose {instr.name}: r={structure.r}, sectors={decomp.n_sectors}, "
          f"N={decomp.horizon}, kappa={decomp.kappa}")
    return EXIT_OK


def _config_hash(meta: dict) -> str:
    return hashlib.sha256(
        json.dumps(meta, sort_keys=True).encode()).hexdigest()


def cmd_simulate(args) -> int:
    try:
        instr = _load(args).validated(args.tol_channel)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except inst.ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        structure, decomp = _decompose(instr, args)
        d = instr.dim
        rho0 = (_load_state(args.initial_state, d) if args.initial_state
                else np.eye(d, dtype=complex) / d)
        rhohat = _load_state(args.filter_state, d) if args.filter_state else None
        cfg = trajectory.RunConfig(
            steps=args.steps, trajectories=args.trajectories,
            root_seed=args.seed, initial_state=rho0, filter_state=rhohat,
            record_stride=args.record_stride, p_floor=args.p_floor)
        rec = trajectory.run_ensemble(instr, decomp, cfg)
    except (invariant.StructureError, sectors.SectorError) as exc:
        print(f"invariant failure: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except trajectory.TrajectoryError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    trajectory.write_records_csv(rec, out / "records.csv")
    meta = {
        "version": __version__,
        "root_seed": args.seed,
        "steps": args.steps,
        "trajectories": args.trajectories,
        "record_stride": args.record_stride,
        "initial_state": inst._matrix_to_json(rho0),
        "filter_state": inst._matrix_to_json(rhohat) if rhohat is not None else None,
        "tolerances": _tolerances(args),
        "instrument": inst.instrument_to_dict(instr),
    }
    meta["config_hash"] = _config_hash(meta)
    _write_json(out / "run_meta.json", meta)
    _write_json(out / "summary.json", rec.summary_dict())
    n_fail = rec.n_trajectories - rec.n_ok
    print(f"simulate {instr.name}: {rec.n_trajectories} trajectories, "
          f"{n_fail} failed")
    if rec.n_trajectories and n_fail == rec.n_trajectories:
        return EXIT_NUMERICAL
    return EXIT_OK


def _records_from_files(out: Path, instr):
    with open(out / "run_meta.json") as fh:
        meta = json.load(fh)
    with open(out / "summary.json") as fh:
        summary = json.load(fh)
    d = int(meta["instrument"]["dim"])
    rho0 = inst._matrix_from_json(meta["initial_state"], d)
    rhohat = (inst._matrix_from_json(meta["filter_state"], d)
              if meta["filter_state"] is not None else None)
    cfg = trajectory.RunConfig(
        steps=int(meta["steps"]), trajectories=int(meta["trajectories"]),
        root_seed=int(meta["root_seed"]), initial_state=rho0,
        filter_state=rhohat, record_stride=int(meta["record_stride"]),
        p_floor=float(meta["tolerances"]["p_floor"]))

    label_to_idx = {str(a): i for i, a in enumerate(instr.outcomes)}
    with open(out / "records.csv") as fh:
        reader = csv.reader(fh)
        columns = next(reader)
        rows = []
        for row in reader:
            vals = []
            for name, cell in zip(columns, row):
                if name == "outcome":
                    vals.append(float(label_to_idx[cell]) if cell else np.nan)
                elif cell == "":
                    vals.append(np.nan)
                else:
                    vals.append(float(cell))
            rows.append(vals)
    records = np.array(rows) if rows else np.empty((0, len(columns)))
    n_sec = sum(1 for c in columns if c.startswith("Q_s"))
    n_traj = cfg.trajectories
    n_rec = records.shape[0] // n_traj if n_traj else 0
    statuses = np.full(n_traj, -1, dtype=np.int64)
    for t in summary["failed_trajectories"]:
        statuses[t] = 0
    final_q = np.full((n_traj, n_sec), np.nan)
    final_qhat = np.full((n_traj, n_sec), np.nan)
    if n_rec:
        finals = records[n_rec - 1::n_rec]
        ok = statuses == -1
        final_q[ok] = finals[ok, 3:3 + n_sec]
        final_qhat[ok] = finals[ok, 3 + n_sec:3 + 2 * n_sec]
    to_arr = lambda xs: np.array([np.nan if x is None else x for x in xs], dtype=float)
    return trajectory.EnsembleRecords(
        columns=columns, records=records,
        record_steps=np.unique(records[:, 1][~np.isnan(records[:, 1])]).astype(np.int64)
        if records.size else np.empty(0, dtype=np.int64),
        statuses=statuses,
        w_mean=to_arr(summary["w_mean"]), w_se=to_arr(summary["w_se"]),
        what_mean=to_arr(summary["what_mean"]),
        what_se=np.full(len(summary["w_mean"]), np.nan) if rhohat is None
        else _filter_se(records, statuses, n_rec, columns),
        q_mean=np.array(summary["q_mean"]) if summary["q_mean"] else
        np.empty((0, n_sec)),
        final_q=final_q, final_qhat=final_qhat,
        outcome_labels=instr.outcomes, n_sectors=n_sec, config=cfg)


def _filter_se(records, statuses, n_rec, columns):
    # What SE is only needed at recorded steps for the filter bound; the
    # summary stores the mean, recompute SE from recorded rows.
    steps = int(np.nanmax(records[:, 1])) if records.size else 0
    se = np.full(steps, np.nan)
    col = columns.index("What")
    n_traj = statuses.shape[0]
    ok = statuses == -1
    for r in range(n_rec):
        rows = records[r::n_rec][ok]
        s = int(rows[0, 1])
        vals = rows[:, col]
        se[s - 1] = float(vals.std() / np.sqrt(max(vals.size, 1)))
    return se


def cmd_analyze(args) -> int:
    out = Path(args.out)
    try:
        instr = _load(args).validated(args.tol_channel)
        with open(out / "run_meta.json") as fh:
            meta = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except inst.ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        structure, decomp = _decompose(instr, args)
        rec = _records_from_files(out, instr)
        report = analysis.AnalysisReport()
        report.born = analysis.born_rule_check(rec, decomp, rec.config.initial_state)
        if decomp.n_sectors >= 2 and decomp.kappa is not None and rec.config.steps > 0:
            report.w_decay = analysis.mean_w_decay(rec, decomp, decomp.kappa,
                                                   decomp.horizon)
            if rec.config.filter_state is not None:
                report.w_decay_filter = analysis.mean_w_decay(
                    rec, decomp, decomp.kappa, decomp.horizon, use_filter=True)
            _rate_fits(rec, decomp, report)
            n_ent = min(rec.config.steps, 2000)
            t_ent = min(max(rec.config.trajectories, 50), 200)
            for g in range(decomp.n_sectors):
                for a in range(decomp.n_sectors):
                    report.entropy_rates[(g, a)] = analysis.entropy_rate(
                        instr, decomp, g, a, n_ent, t_ent,
                        seed=rec.config.root_seed + 1)
        else:
            report.notes.append(
                "single sector (or unresolved horizon): every trajectory selects "
                "it; rate analysis is vacuous")
    except (invariant.StructureError, sectors.SectorError) as exc:
        print(f"invariant failure: {exc}", file=sys.stderr)
        return EXIT_VALIDATION

    data = report.to_dict()
    data["tolerances"] = _tolerances(args)
    data["config_hash"] = meta.get("config_hash")
    _write_json(out / "analysis.json", data)
    _write_w_csv(out / "w_decay.csv", rec, decomp)
    print(f"analyze {instr.name}: report written to {out / 'analysis.json'}")
    return EXIT_OK


def _rate_fits(rec, decomp, report):
    n_sec = decomp.n_sectors
    n_rec = rec.record_steps.shape[0]
    ok = rec.statuses == -1
    slopes = {a: [] for a in range(n_sec)}
    for t in range(rec.n_trajectories):
        if not ok[t]:
            continue
        rows = rec.rows_for(t)
        sel = int(np.argmax(rec.final_q[t]))
        for a in range(n_sec):
            if a == sel:
                continue
            q = rows[:, 3 + a]
            try:
                fit = analysis.as_rate(rows[:, 1], q)
            except ValueError:
                continue
            slopes[a].append(fit.slope)
    for a, vals in slopes.items():
        if vals:
            arr = np.array(vals)
            report.rate_fits[a] = analysis.RateFit(
                float(arr.mean()),
                float(arr.std(ddof=1) / np.sqrt(arr.size)) if arr.size > 1 else 0.0,
                int(arr.size), int(0.1 * n_rec), False)


def _write_w_csv(path, rec, decomp):
    gamma = (decomp.kappa ** (1.0 / decomp.horizon)
             if decomp.kappa is not None and decomp.horizon else float("nan"))
    from .trajectory import lyapunov_w, q_vector
    w0 = lyapunov_w(q_vector(decomp, rec.config.initial_state))
    with open(path, "w") as fh:
        fh.write("step,w_mean,w_se,bound\n")
        for i in range(rec.w_mean.size):
            bound = w0 * gamma ** (i + 1) if not np.isnan(gamma) else float("nan")
            fh.write("%d,%.17g,%.17g,%.17g\n"
                     % (i + 1, rec.w_mean[i], rec.w_se[i], bound))


def cmd_pipeline(args) -> int:
    for fn in (cmd_validate, cmd_decompose, cmd_simulate, cmd_analyze):
        code = fn(args)
        if code != EXIT_OK:
            return code
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="qtsector",
        description="Invariant structure, quantum trajectory simulation and "
                    "sector-selection verification for finite instruments.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    for name, fn in [("validate", cmd_validate), ("decompose", cmd_decompose),
                     ("simulate", cmd_simulate), ("analyze", cmd_analyze),
                     ("pipeline", cmd_pipeline)]:
        sp = sub.add_parser(name)
        sp.set_defaults(func=fn)
        sp.add_argument("--instrument", required=True,
                        help="instrument JSON file, or a bundled corpus name")
        sp.add_argument("--out", default=None if name == "validate" else "out",
                        help="output directory")
        sp.add_argument("--seed", type=int, default=0, help="root seed (u64)")
        sp.add_argument("--steps", type=int, default=200)
        sp.add_argument("--trajectories", type=int, default=1000)
        sp.add_argument("--record-stride", type=int, default=1)
        sp.add_argument("--filter-state", default=None,
                        help="JSON state file for the filter initial state")
        sp.add_argument("--initial-state", default=None,
                        help="JSON state file (default: maximally mixed)")
        sp.add_argument("--l-eq", type=int, default=None)
        sp.add_argument("--n-max", type=int, default=8)
        sp.add_argument("--tol-channel", type=float, default=inst.DEFAULT_TOL_CHANNEL)
        sp.add_argument("--tol-supp", type=float, default=1e-9)
        sp.add_argument("--tol-fix", type=float, default=invariant.DEFAULT_TOL_FIX)
        sp.add_argument("--tol-law", type=float, default=sectors.DEFAULT_TOL_LAW)
        sp.add_argument("--tol-class", type=float, default=analysis.DEFAULT_TOL_CLASS)
        sp.add_argument("--p-floor", type=float, default=trajectory.DEFAULT_P_FLOOR)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    for tol in ("tol_channel", "tol_supp", "tol_fix", "tol_law", "tol_class", "p_floor"):
        if getattr(args, tol) <= 0:
            print(f"input error: --{tol.replace('_', '-')} must be positive",
                  file=sys.stderr)
            return EXIT_INPUT
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
