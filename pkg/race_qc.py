"""
race_qc.py
──────────────────────────────────────────────────────────────────────────────
Race QC: run race analyses on a concurrency trace and check which reported
races survive inaccurate tracing of write-read dependencies.

  python race_qc.py analyze  --algo {fasttrack,hb,shb,sshb} [--input FILE]
  python race_qc.py diagnose [--lockset-filter] [--oracle-check] [--jobs N]
  python race_qc.py compare  [--log-dir DIR]
  python race_qc.py gen      --threads 3 --vars 2 --locks 1 --events 50 --seed 7
  python race_qc.py perturb  --mode {rw,rr} --seed 3 [--swaps N]
  python race_qc.py validate --level {strict,lenient} [--dummy-releases]
  python race_qc.py stats

Without --input the first trace in QCTraces/ is used. Reports go to stdout
(or --out) as text or JSON. Exit status: 0 ok (races found is still ok),
2 bad input or config, 3 oracle cap exceeded.
"""

import argparse
import json
import logging
import sys
import time
from typing import Iterable, Optional

import pandas as pd

from analyzers import (
    RaceCategory,
    RacePair,
    dedup_by_location,
    run_fasttrack,
    run_hb_partner,
    run_shb_partner,
    run_sshb_phase1,
)
from diagnosis import Classification, DiagnosisReport, dedup_classifications, diagnose_all
from lockset import compute_locksets, lockset_flags
from perturb_gen import GenConfig, PerturbMode, gen_trace, perturb
from relations import CandidateProductTooLarge, Verdict, enumerate_someshb, hb_relation, oracle_classify
from trace_model import Trace, TraceError, ValidityLevel, serialize_trace, validate
from trace_utils import LOG_DIR, read_trace_file, setup_logging, write_csv_log, write_output

__version__ = "0.1.0"

logger = logging.getLogger("race_qc")

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_CAP = 3

ALGORITHMS = ("fasttrack", "hb", "shb", "sshb")


# --- Report documents ---

def race_to_dict(pair: RacePair) -> dict:
    return {
        "first": str(pair.first),
        "second": str(pair.second),
        "category": pair.category.value,
        "variable": pair.variable,
        "positions": list(pair.key),
        "locations": [pair.first.location, pair.second.location],
    }


def classification_to_dict(c: Classification) -> dict:
    out = race_to_dict(c.pair)
    out["verdict"] = c.verdict.value
    out["witness"] = [str(e) for e in c.witness] if c.witness else None
    out["lockset_fp"] = c.lockset_fp
    if c.witness_feasible is not None:
        out["witness_feasible"] = c.witness_feasible
    return out


def algorithm_section(pairs: Iterable[RacePair]) -> dict:
    races = sorted(pairs, key=lambda p: p.key)
    section = {"total": len(races)}
    for cat in RaceCategory:
        section[cat.value] = sum(1 for p in races if p.category is cat)
    section["races"] = [race_to_dict(p) for p in races]
    return section


def diagnosis_section(report: DiagnosisReport, agreement: Optional[float] = None) -> dict:
    return {
        "summary": report.summary(),
        "classifications": [classification_to_dict(c) for c in report.classifications],
        "lockset_fp": report.lockset_fp,
        "wrd_candidates": {"avg": report.wrd_avg, "max": report.wrd_max},
        "timings": {
            "phase1": round(report.phase1_seconds, 6),
            "phase2": round(report.phase2_seconds, 6),
            "phase1+2": f"{report.phase1_seconds:.3f}+{report.phase2_seconds:.3f}",
        },
        "oracle_agreement": agreement,
    }


def base_document(trace: Trace, path: Optional[str]) -> dict:
    return {"tool": "race_qc", "version": __version__, "input": path, "trace": trace.meta(), "algorithms": {}}


def analyze_document(trace: Trace, path: Optional[str], algo: str, dedup: bool = False) -> dict:
    doc = base_document(trace, path)
    start = time.perf_counter()
    if algo == "fasttrack":
        report = run_fasttrack(trace)
        pairs = report.race_pairs()
        doc["fasttrack"] = {
            "detections": [
                {"event": str(d.event), "clock": list(d.clock), "races": [race_to_dict(p) for p in d.pairs]}
                for d in report.detections
            ],
            "sound_up_to_first_race": report.sound_up_to_first_race,
        }
    elif algo == "hb":
        pairs = run_hb_partner(trace)
    elif algo == "shb":
        pairs = run_shb_partner(trace)
    elif algo == "sshb":
        pairs = run_sshb_phase1(trace).races
    else:
        raise ValueError(f"unknown algorithm '{algo}' (choose from {', '.join(ALGORITHMS)})")
    if dedup:
        pairs = dedup_by_location(pairs)
    doc["algorithms"][algo] = algorithm_section(pairs)
    doc["algorithms"][algo]["seconds"] = round(time.perf_counter() - start, 6)
    return doc


def oracle_agreement(trace: Trace, report: DiagnosisReport) -> float:
    """Share of classifications matching exhaustive enumeration (1.0 = all)."""
    if not report.classifications:
        return 1.0
    hb = hb_relation(trace)
    instances = enumerate_someshb(trace, hb=hb)
    agree = sum(oracle_classify(trace, c.pair, instances, hb) is c.verdict for c in report.classifications)
    return agree / len(report.classifications)


def diagnose_document(
    trace: Trace,
    path: Optional[str],
    lockset_filter: bool = False,
    oracle_check: bool = False,
    dedup: bool = False,
    jobs: int = 1,
    verify_witness: bool = False,
) -> dict:
    report = diagnose_all(trace, jobs=jobs, verify_witness=verify_witness)
    if dedup:
        report = dedup_classifications(report)
    if lockset_filter:
        report = lockset_flags(report, compute_locksets(trace))
    agreement = oracle_agreement(trace, report) if oracle_check else None

    doc = base_document(trace, path)
    doc["algorithms"]["hb"] = algorithm_section(report.races)
    doc["diagnosis"] = diagnosis_section(report, agreement)
    return doc


def comparison_table(hb: dict, shb: dict, report: DiagnosisReport) -> pd.DataFrame:
    """One row per analysis; SSHB cells read X/G (races / guaranteed)."""
    x_over_g = report.summary()
    no_candidates = {"#w(r) avg": "-", "#w(r) max": "-"}
    rows = {
        "HB": {**{k: hb[k] for k in ("total", "WW", "WR", "RW")}, "time": f"{hb['seconds']:.3f}", **no_candidates},
        "SHB": {**{k: shb[k] for k in ("total", "WW", "WR", "RW")}, "time": f"{shb['seconds']:.3f}", **no_candidates},
        "SSHB": {
            **{k: x_over_g[k] for k in ("total", "WW", "WR", "RW")},
            "time": f"{report.phase1_seconds:.3f}+{report.phase2_seconds:.3f}",
            "#w(r) avg": report.wrd_avg,
            "#w(r) max": report.wrd_max,
        },
    }
    return pd.DataFrame.from_dict(rows, orient="index")


def compare_document(trace: Trace, path: Optional[str], dedup: bool = False) -> tuple[dict, pd.DataFrame]:
    doc = base_document(trace, path)
    for algo in ("hb", "shb"):
        doc["algorithms"][algo] = analyze_document(trace, path, algo, dedup)["algorithms"][algo]
    report = diagnose_all(trace)
    if dedup:
        report = dedup_classifications(report)
    doc["algorithms"]["sshb"] = algorithm_section(report.races)
    doc["diagnosis"] = diagnosis_section(report)
    table = comparison_table(doc["algorithms"]["hb"], doc["algorithms"]["shb"], report)
    doc["comparison"] = json.loads(table.to_json(orient="index"))
    return doc, table


# --- Text rendering ---

def render_text(doc: dict, table: Optional[pd.DataFrame] = None) -> str:
    lines = ["", "--- Race QC Report ---", f"input: {doc['input']}"]
    lines.append("trace: " + " ".join(f"{k}={v}" for k, v in doc["trace"].items()))

    for algo, section in doc["algorithms"].items():
        lines.append("")
        lines.append(
            f"[{algo}] {section['total']} race pair(s)  WW {section['WW']}  WR {section['WR']}  RW {section['RW']}"
        )
        if "diagnosis" not in doc:
            lines += [f"  {r['first']:<12} {r['second']:<12} {r['category']}" for r in section["races"]]

    ft = doc.get("fasttrack")
    if ft:
        lines.append("")
        lines.append(f"FastTrack detections: {len(ft['detections'])} (sound up to the first race only)")
        for d in ft["detections"]:
            lines.append(f"  {d['event']:<12} clock {d['clock']}")

    diag = doc.get("diagnosis")
    if diag:
        lines.append("")
        lines.append("=" * 50)
        lines.append("Diagnosis (X/G = races / guaranteed)")
        lines.append("  " + "  ".join(f"{k} {v}" for k, v in diag["summary"].items()))
        lines.append("=" * 50)
        for c in diag["classifications"]:
            mark = "✅" if c["verdict"] == Verdict.GUARANTEED.value else "⚠️ "
            line = f"  {mark} {c['verdict']:<10} ({c['first']}, {c['second']}) {c['category']}"
            if c["witness"]:
                line += "  via " + " -> ".join(c["witness"])
            if c["lockset_fp"]:
                line += "  [lockset FP]"
            lines.append(line)
        if diag["lockset_fp"] is not None:
            lines.append(f"  SSHB(FP): {diag['lockset_fp']}")
        wc = diag["wrd_candidates"]
        lines.append(f"  #w(r) avg {wc['avg']}  max {wc['max']}")
        lines.append(f"  Phase1+2: {diag['timings']['phase1+2']} s")
        if diag["oracle_agreement"] is not None:
            agreement = diag["oracle_agreement"] * 100
            mark = "✅" if agreement == 100 else "❌"
            lines.append(f"  {mark} oracle agreement: {agreement:.1f}%")

    if table is not None:
        lines.append("")
        lines.append("-" * 62)
        lines.append(table.to_string())
        lines.append("-" * 62)

    return "\n".join(lines) + "\n"


def emit(doc: dict, fmt: str, out: Optional[str], table: Optional[pd.DataFrame] = None) -> None:
    text = json.dumps(doc, indent=2, ensure_ascii=False) + "\n" if fmt == "json" else render_text(doc, table)
    write_output(text, out)


# --- Commands ---

def load_checked(args) -> tuple[Trace, str]:
    """Read the input trace and make sure every acquire has its release."""
    trace, path = read_trace_file(args.input)
    report = validate(trace, ValidityLevel.LENIENT, insert_dummy_releases=args.dummy_releases)
    if not report.ok:
        first = report.violations[0]
        raise TraceError(
            f"{path}: {len(report.violations)} lock violation(s), first at {first.pos}: {first.message}"
        )
    return report.trace, path


def cmd_analyze(args) -> int:
    trace, path = load_checked(args)
    emit(analyze_document(trace, path, args.algo, args.dedup_by_location), args.format, args.out)
    return EXIT_OK


def cmd_diagnose(args) -> int:
    trace, path = load_checked(args)
    doc = diagnose_document(
        trace,
        path,
        lockset_filter=args.lockset_filter,
        oracle_check=args.oracle_check,
        dedup=args.dedup_by_location,
        jobs=args.jobs,
        verify_witness=args.verify_witness,
    )
    emit(doc, args.format, args.out)
    return EXIT_OK


def cmd_compare(args) -> int:
    trace, path = load_checked(args)
    doc, table = compare_document(trace, path, args.dedup_by_location)
    emit(doc, args.format, args.out, table)
    if args.log_dir:
        csv_path = write_csv_log(table, args.log_dir, prefix="race_qc_compare")
        logger.info("comparison logged to %s", csv_path)
    return EXIT_OK


def cmd_gen(args) -> int:
    cfg = GenConfig(
        threads=args.threads,
        vars=args.vars,
        locks=args.locks,
        events=args.events,
        lock_discipline=args.lock_discipline,
        ensure_initial_writes=args.ensure_initial_writes,
        seed=args.seed,
        read_ratio=args.read_ratio,
    )
    write_output(serialize_trace(gen_trace(cfg)), args.out)
    return EXIT_OK


def cmd_perturb(args) -> int:
    trace, _ = read_trace_file(args.input)
    write_output(serialize_trace(perturb(trace, PerturbMode(args.mode), args.seed, args.swaps)), args.out)
    return EXIT_OK


def cmd_validate(args) -> int:
    trace, path = read_trace_file(args.input)
    report = validate(trace, ValidityLevel(args.level), insert_dummy_releases=args.dummy_releases)
    print(f"--- Trace Validation ({report.level.value}) ---")
    print(f"input: {path}")
    if report.inserted_releases:
        print(f"⚠️  inserted {report.inserted_releases} dummy release(s)")
    for v in report.violations:
        print(f"  ❌ {v.pos:>6}  {v.rule:<18} {v.message}")
    print("✅ valid" if report.ok else f"❌ {len(report.violations)} violation(s)")
    if args.out:
        write_output(serialize_trace(report.trace), args.out)
    return EXIT_OK if report.ok else EXIT_INPUT


def cmd_stats(args) -> int:
    trace, path = read_trace_file(args.input)
    if args.format == "json":
        write_output(json.dumps({"input": path, "trace": trace.meta()}, indent=2) + "\n", args.out)
    else:
        write_output(pd.Series(trace.meta(), name=path).to_string() + "\n", args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="race_qc", description="Race prediction and diagnosis for concurrency traces")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--input", help="trace file (default: first trace in QCTraces/)")
    common.add_argument("--out", help="write output here instead of stdout")
    common.add_argument("-v", "--verbose", action="store_true", help="debug logging")

    report = argparse.ArgumentParser(add_help=False, parents=[common])
    report.add_argument("--format", choices=("text", "json"), default="text")
    report.add_argument("--dedup-by-location", action="store_true", help="one race per pair of code locations")
    report.add_argument("--dummy-releases", action="store_true", help="close dangling acquires at the trace end")

    p = sub.add_parser("analyze", parents=[report], help="run one race analysis")
    p.add_argument("--algo", choices=ALGORITHMS, default="sshb")
    p.set_defaults(handler=cmd_analyze)

    p = sub.add_parser("diagnose", parents=[report], help="classify races as guaranteed or maybe")
    p.add_argument("--lockset-filter", action="store_true", help="flag guaranteed races sharing a held lock")
    p.add_argument("--oracle-check", action="store_true", help="cross-check every verdict by enumeration")
    p.add_argument("--verify-witness", action="store_true", help="check that each maybe witness is realizable")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(handler=cmd_diagnose)

    p = sub.add_parser("compare", parents=[report], help="hb vs shb vs sshb side by side")
    p.add_argument("--log-dir", nargs="?", const=LOG_DIR, help=f"also write a timestamped CSV (default dir: {LOG_DIR})")
    p.set_defaults(handler=cmd_compare)

    p = sub.add_parser("gen", parents=[common], help="generate a random Strict-valid trace")
    defaults = GenConfig()
    p.add_argument("--threads", type=int, default=defaults.threads)
    p.add_argument("--vars", type=int, default=defaults.vars)
    p.add_argument("--locks", type=int, default=defaults.locks)
    p.add_argument("--events", type=int, default=defaults.events)
    p.add_argument("--lock-discipline", type=float, default=defaults.lock_discipline)
    p.add_argument("--read-ratio", type=float, default=defaults.read_ratio)
    p.add_argument("--ensure-initial-writes", action="store_true")
    p.add_argument("--seed", type=int, default=defaults.seed)
    p.set_defaults(handler=cmd_gen)

    p = sub.add_parser("perturb", parents=[common], help="reorder a trace like an inaccurate tracer would")
    p.add_argument("--mode", choices=[m.value for m in PerturbMode], default=PerturbMode.RW.value)
    p.add_argument("--swaps", type=int, default=None, help="attempted swaps (default: trace length)")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(handler=cmd_perturb)

    p = sub.add_parser("validate", parents=[common], help="check lock well-formedness")
    p.add_argument("--level", choices=[lv.value for lv in ValidityLevel], default=ValidityLevel.STRICT.value)
    p.add_argument("--dummy-releases", action="store_true")
    p.set_defaults(handler=cmd_validate)

    p = sub.add_parser("stats", parents=[common], help="trace metadata")
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.set_defaults(handler=cmd_stats)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(args.verbose)
    try:
        return args.handler(args)
    except CandidateProductTooLarge as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_CAP
    except (OSError, ValueError) as e:
        # TraceError and GenConfigError are ValueErrors
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
