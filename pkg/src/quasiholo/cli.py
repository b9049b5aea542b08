"""Command-line front end.

Exit codes: 0 success / VALID, 1 FAIL / REFUTED / INVALID, 2 usage error,
3 resource error.
"""

import argparse
import hashlib
import json
import os
import sys
import tempfile
from pathlib import Path

from . import __version__
from .exactmath import UsageError
from .formulas import TABLE_ROWS, eval_closed_form, get_entry, load_catalog, verify_entry
from .guess import (REFUTED, Ansatz, detect_period, fit_quasi, guess_univariate,
                    required_length, specialize)
from .opalgebra import ShiftOperator, certify, lift_period, parse_operator, transfer_operator
from .walks import (ResourceError, StepSet, WalkTable, as_region, enumerate_walks, gessel_G,
                    refined_enumerate)

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_RESOURCE = 0, 1, 2, 3
BOX_POLICY_VERSION = 1


def _dumps(obj):
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _sha256(text):
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def atomic_write(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _config(args):
    skip = {"func", "command"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def artifact(args, payload, inputs=None):
    return {
        "tool": "quasiholo",
        "version": __version__,
        "command": args.command,
        "config": _config(args),
        "input_hashes": inputs or {},
        "result": payload,
    }


def emit(args, payload, text_lines, inputs=None):
    """Write the artifact (if --out) and print either JSON or text."""
    doc = artifact(args, payload, inputs)
    if getattr(args, "out", None):
        atomic_write(args.out, _dumps(doc))
    if args.format == "json":
        sys.stdout.write(_dumps(doc))
    else:
        for line in text_lines:
            print(line)
    return doc


# ---------------------------------------------------------------------------
# table cache
# ---------------------------------------------------------------------------

def cache_key(steps, region, m_max):
    fields = {"steps": str(steps), "region": str(region), "m_max": m_max, "box_policy": BOX_POLICY_VERSION}
    return _sha256(json.dumps(fields, sort_keys=True))


def get_table(steps, region, m_max, cache_dir=None, backend=None):
    """Enumerate with full retention, going through the on-disk cache if given."""
    steps = steps if isinstance(steps, StepSet) else StepSet.parse(steps)
    region = as_region(region, steps.dim)
    if cache_dir:
        path = Path(cache_dir) / f"{cache_key(steps, region, m_max)}.json"
        if path.exists():
            doc = json.loads(path.read_text(encoding="utf-8"))
            body = _dumps(doc["table"])
            if _sha256(body) == doc.get("sha256"):
                return WalkTable.from_json(doc["table"])
    table = enumerate_walks(steps, region, m_max, retain=True, backend=backend)
    if cache_dir:
        body = _dumps(table.to_json())
        atomic_write(path, _dumps({"sha256": _sha256(body), "table": table.to_json()}))
    return table


def table_hash(table):
    return _sha256(_dumps(table.to_json()))


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_enumerate(args):
    steps = StepSet.parse(args.steps)
    region = as_region(args.region, steps.dim)
    table = get_table(steps, region, args.m, args.cache_dir, args.backend)
    tj = table.to_json()
    payload = {"table": tj, "return_sequence": tj["returns"], "table_sha256": table_hash(table)}
    lines = [f"steps {steps}  region {region}  m_max {args.m}  box {list(table.box)}",
             "return sequence: " + ",".join(str(v) for v in table.returns)]
    emit(args, payload, lines)
    return EXIT_OK


def cmd_table(args):
    catalog = load_catalog(args.catalog)
    rows = [r.strip() for r in args.rows.split(",")] if args.rows else list(TABLE_ROWS)
    reports, lines, sequences = [], [], {}
    for key in rows:
        cf = get_entry(key, catalog)
        table = get_table(cf.steps, cf.region, args.m, args.cache_dir, args.backend)
        rep = verify_entry(cf, table)
        sequences[key] = table.return_sequence()
        rep["return_sequence"] = [str(v) for v in sequences[key]]
        reports.append(rep)
        status = "PASS" if rep["ok"] else "FAIL"
        lines.append(f"row {key:>2}  {str(cf.steps):<22} period {cf.period}  {status}"
                     + ("" if rep["ok"] else f"  first mismatch {rep['mismatches'][0]}"))
    pairs = []
    for a, b in (("5", "6"), ("8", "9"), ("2", "4")):
        if a in sequences and b in sequences:
            same = sequences[a] == sequences[b]
            pairs.append({"rows": [a, b], "identical": same})
            lines.append(f"rows {a}/{b} sequences identical: {same}")
    passed = sum(r["ok"] for r in reports)
    lines.append(f"{passed}/{len(reports)} PASS")
    ok = passed == len(reports) and all(p["identical"] for p in pairs)
    emit(args, {"rows": reports, "pairs": pairs, "passed": passed, "total": len(reports), "ok": ok}, lines)
    return EXIT_OK if ok else EXIT_FAIL


def _sequence_from_args(args):
    if args.sequence:
        return [int(x) for x in args.sequence.split(",")], None
    steps = StepSet.parse(args.steps)
    table = get_table(steps, as_region(args.region, steps.dim), args.m, args.cache_dir, args.backend)
    return table.return_sequence(), table


def cmd_guess(args):
    if args.mode == "quasi":
        return _guess_quasi(args)
    seq, table = _sequence_from_args(args)
    period = detect_period(seq)
    sub = seq[::period]
    if len(sub) < required_length(0, 0):
        need = period * (required_length(0, 0) - 1)
        raise UsageError(f"too few terms for any ansatz: need {required_length(0, 0)} nonzero terms, "
                         f"i.e. m_max >= {need}")
    tried = []
    cand = guess_univariate(sub, args.order, args.degree, report=tried)
    inputs = {"sequence_sha256": _sha256(",".join(str(v) for v in seq))}
    payload = {"period": period, "subsequence": [str(v) for v in sub], "searched": tried,
               "candidate": None if cand is None else cand.to_json()}
    refuted = any(t["result"] == REFUTED for t in tried)
    lines = [f"period {period}; nonzero subsequence {','.join(str(v) for v in sub[:12])}"
             + (",..." if len(sub) > 12 else "")]
    if cand is None:
        lines.append(f"no verified recurrence with order <= {args.order}, degree <= {args.degree}")
    else:
        lifted = lift_period(cand.operator, period) if period > 1 else cand.operator.rename(("m",))
        payload["lifted"] = str(lifted)
        payload["lifted_json"] = lifted.to_json()
        lines.append(f"{cand.status}: {cand.operator}")
        lines.append(f"on f(m): {lifted}")
    if refuted:
        lines.append("note: REFUTED candidates were produced during the search")
    emit(args, payload, lines, inputs)
    return EXIT_FAIL if refuted else EXIT_OK


def _guess_quasi(args):
    if not args.steps:
        raise UsageError("--mode quasi needs --steps")
    steps = StepSet.parse(args.steps)
    table = get_table(steps, as_region(args.region, steps.dim), args.m, args.cache_dir, args.backend)
    ansatz = Ansatz.quasi(table.index_vars, args.shift_degree, args.coef_degree)
    search = []
    cand = fit_quasi(table, ansatz, search=search)
    payload = {"ansatz": ansatz.to_json(), "search": search[0].to_json() if search else None,
               "candidate": None if cand is None else cand.to_json()}
    lines = [f"quasi ansatz: shift degree <= {args.shift_degree}, coefficient degree <= {args.coef_degree}, "
             f"{search[0].unknowns if search else 0} unknowns"]
    if cand is None:
        lines.append("none: no operator with nonzero R0 fits")
    else:
        r0 = specialize(cand)
        payload["specialized"] = str(r0)
        lines.append(f"{cand.status}: {cand.operator}")
        lines.append(f"R0: {r0}")
    emit(args, payload, lines, {"table_sha256": table_hash(table)})
    return EXIT_FAIL if cand is not None and cand.status == REFUTED else EXIT_OK


def load_operator(args, index_vars):
    if args.transfer:
        return transfer_operator(StepSet.parse(args.steps))
    if args.expr:
        names = tuple(args.vars.split(",")) if args.vars else index_vars
        return parse_operator(args.expr, names)
    if not args.operator:
        raise UsageError("give --operator FILE, --expr TEXT or --transfer")
    text = Path(args.operator).read_text(encoding="utf-8")
    try:
        obj = json.loads(text)
    except json.JSONDecodeError:
        names = tuple(args.vars.split(",")) if args.vars else index_vars
        return parse_operator(text, names)
    if "result" in obj:  # a guess artifact
        obj = obj["result"].get("lifted_json") or obj["result"]["candidate"]["operator_json"]
    elif "operator_json" in obj:
        obj = obj["operator_json"]
    try:
        return ShiftOperator.from_json(obj)
    except (KeyError, TypeError) as exc:
        raise UsageError(f"malformed operator file {args.operator}: {exc}") from None


def cmd_certify(args):
    steps = StepSet.parse(args.steps)
    region = as_region(args.region, steps.dim)
    table = get_table(steps, region, args.m, args.cache_dir, args.backend)
    op = load_operator(args, table.index_vars)
    cert = certify(op, steps, region, args.m, domain=args.domain, table=table)
    payload = cert.to_json()
    lines = [f"{cert.status}: chain depth {cert.chain.depth}, identities {cert.identities}, "
             f"Q residual ok {cert.transfer.ok}, delta {cert.delta}"]
    for i, (res, req) in enumerate(zip(cert.residuals, cert.required)):
        lines.append(f"  P_{i}: {'required' if req else 'informational'}  checked {res.checked}  "
                     f"nonzero {len(res.nonzero)}")
    if cert.witness is not None:
        lines.append(f"witness {cert.witness[0]} -> {cert.witness[1]}")
    emit(args, payload, lines, {"table_sha256": table_hash(table), "operator": str(op)})
    return EXIT_OK if cert.valid else EXIT_FAIL


def cmd_refined(args):
    steps = StepSet.parse(args.steps)
    region = as_region(args.region, steps.dim)
    rt = refined_enumerate(steps, region, args.total, backend=args.backend)
    payload = {"r": rt.r, "region_refined": str(rt.region_refined), "total_max": rt.total_max}
    lines = [f"r = {rt.r}; refined region {rt.region_refined}"]
    if args.point:
        pts = [tuple(int(x) for x in p.split(",")) for p in args.point]
        payload["values"] = [{"point": list(p), "f": str(rt.f(*p))} for p in pts]
        lines += [f"f{p} = {rt.f(*p)}" for p in pts]
    walk = enumerate_walks(steps, region, args.total)
    returns = walk.return_sequence()
    if rt.r == 3:
        diag = [rt.f(n, n, n) for n in range(args.total // 3 + 1)]
        payload["diagonal"] = [str(v) for v in diag]
        payload["diagonal_matches_returns"] = diag == returns[::3][:len(diag)]
        lines.append("f(n,n,n): " + ",".join(map(str, diag)))
        lines.append(f"equals F(3n; origin): {payload['diagonal_matches_returns']}")
    if rt.r == 4:
        G = [gessel_G(rt, n) for n in range(args.total // 2 + 1)]
        payload["G"] = [str(v) for v in G]
        payload["G_matches_returns"] = G == returns[::2][:len(G)]
        lines.append("G(n): " + ",".join(map(str, G)))
        lines.append(f"equals F(2n; origin): {payload['G_matches_returns']}")
    emit(args, payload, lines)
    ok = payload.get("diagonal_matches_returns", True) and payload.get("G_matches_returns", True)
    return EXIT_OK if ok else EXIT_FAIL


def cmd_closedform(args):
    cf = get_entry(args.key, load_catalog(args.catalog))
    values = [eval_closed_form(cf, n) for n in range(args.n + 1)]
    payload = {"key": cf.key, "steps": str(cf.steps), "period": cf.period,
               "values": [str(v) for v in values]}
    lines = [f"{cf.key}: " + ",".join(map(str, values))]
    code = EXIT_OK
    if args.verify:
        table = get_table(cf.steps, cf.region, cf.period * args.n, args.cache_dir, args.backend)
        rep = verify_entry(cf, table, args.n)
        payload["verify"] = rep
        lines.append("PASS" if rep["ok"] else f"FAIL {rep['mismatches'][:3]}")
        code = EXIT_OK if rep["ok"] else EXIT_FAIL
    emit(args, payload, lines)
    return code


# ---------------------------------------------------------------------------

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="write the JSON artifact here")
    common.add_argument("--cache-dir", help="directory for cached walk tables")
    common.add_argument("--format", choices=("json", "text"), default="text", help="stdout format")
    common.add_argument("--seed", type=int, default=0, help="recorded for provenance")
    common.add_argument("--backend", choices=("numba", "numpy"), default=None)

    walk = argparse.ArgumentParser(add_help=False)
    walk.add_argument("--steps", help='step set, e.g. "-1,0;0,-1;1,1"')
    walk.add_argument("--region", default="quadrant",
                      help="quadrant | halfline | octant3d | ballot:d | none | 'c1,..,cd>=b;...'")
    walk.add_argument("--m", type=int, default=24, help="maximal walk length")

    p = argparse.ArgumentParser(prog="quasiholo", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("enumerate", parents=[common, walk], help="fill F(m; n) and print the return sequence")
    s.set_defaults(func=cmd_enumerate)

    s = sub.add_parser("table", parents=[common], help="check the eleven-row closed-form table")
    s.add_argument("--rows", help="comma-separated row keys (default 1..11)")
    s.add_argument("--m", type=int, default=24)
    s.add_argument("--catalog", help="alternative catalog JSON")
    s.set_defaults(func=cmd_table)

    s = sub.add_parser("guess", parents=[common, walk], help="guess recurrences from enumerated data")
    s.add_argument("--sequence", help="comma-separated terms instead of a walk")
    s.add_argument("--mode", choices=("univariate", "quasi"), default="univariate")
    s.add_argument("--order", type=int, default=2, help="max recurrence order")
    s.add_argument("--degree", type=int, default=3, help="max coefficient degree")
    s.add_argument("--shift-degree", type=int, default=2, help="quasi: max exponent per shift")
    s.add_argument("--coef-degree", type=int, default=2, help="quasi: max total coefficient degree")
    s.set_defaults(func=cmd_guess)

    s = sub.add_parser("certify", parents=[common, walk], help="commutator chain + residual certificate")
    s.add_argument("--operator", help="operator file (JSON, guess artifact, or text)")
    s.add_argument("--expr", help="operator text, e.g. '(1) + (-1)*M^-1*N1'")
    s.add_argument("--vars", help="index variables for text operators, e.g. m,n1,n2")
    s.add_argument("--transfer", action="store_true", help="certify the transfer operator itself")
    s.add_argument("--domain", choices=("region", "origin"), default="region")
    s.set_defaults(func=cmd_certify)

    s = sub.add_parser("refined", parents=[common, walk], help="counting by step multiplicities")
    s.add_argument("--total", type=int, default=12, help="max total number of steps")
    s.add_argument("--point", action="append", help="multiplicity vector a,b,c,... (repeatable)")
    s.set_defaults(func=cmd_refined)

    s = sub.add_parser("closedform", parents=[common], help="evaluate a catalog closed form")
    s.add_argument("--key", required=True)
    s.add_argument("--n", type=int, default=10)
    s.add_argument("--verify", action="store_true", help="compare with enumeration")
    s.add_argument("--catalog", help="alternative catalog JSON")
    s.set_defaults(func=cmd_closedform)
    return p


_VALUE_FLAGS = {"--steps", "--region", "--point", "--expr", "--sequence"}


def _glue_values(argv):
    """Step sets start with '-1', which argparse would take for a flag."""
    out, i = [], 0
    while i < len(argv):
        tok = argv[i]
        if tok in _VALUE_FLAGS and i + 1 < len(argv):
            out.append(f"{tok}={argv[i + 1]}")
            i += 2
        else:
            out.append(tok)
            i += 1
    return out


def main(argv=None):
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    args = parser.parse_args(_glue_values(argv))
    try:
        if args.command in ("enumerate", "certify", "refined") and not args.steps:
            raise UsageError("--steps is required")
        return args.func(args)
    except ResourceError as exc:
        print(f"resource error: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except (UsageError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
