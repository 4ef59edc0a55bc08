"""Command line entry point: ``misnc <verb> ...``.

Exit status is 0 when the run succeeds and every certificate holds, 1 when
a certificate fails, and 2 on bad input.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from misnc import harness
from misnc.harness import DocumentError


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _add_output(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", help="directory for report files")
    p.add_argument("--format", choices=harness.FORMATS, default="all")


def _add_instance(p: argparse.ArgumentParser) -> None:
    p.add_argument("instance", nargs="?",
                   help="instance document (JSON); defaults to the butterfly")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="misnc", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("offline", help="FPTAS for concurrent throughput")
    _add_instance(p)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--epsilon", type=float)
    g.add_argument("--omega", type=float)
    _add_output(p)

    p = sub.add_parser("online", help="online admission and routing")
    _add_instance(p)
    p.add_argument("--phi", type=float)
    p.add_argument("--variant", choices=("exact", "shifted"))
    p.add_argument("--sigma", type=float)
    p.add_argument("--lambda-thr", type=float, dest="lambda_thr")
    p.add_argument("--seed", type=int, default=0, help="trace seed for the default instance")
    _add_output(p)

    p = sub.add_parser("mincost", help="min-cost coded multicast for each request")
    _add_instance(p)
    p.add_argument("--variant", choices=("exact", "shifted"))
    p.add_argument("--price", type=float, help="uniform link price (overrides the document)")
    _add_output(p)

    p = sub.add_parser("sweep", help="epsilon and phi sweeps on the butterfly")
    p.add_argument("--epsilons", type=_floats, default=list(harness.DEFAULT_EPSILONS))
    p.add_argument("--phis", type=_floats, default=list(harness.DEFAULT_PHIS))
    p.add_argument("--epsilon", type=float, default=harness.REFERENCE_EPSILON,
                   help="epsilon of the link-load comparison run")
    p.add_argument("--phi", type=float, default=1.0,
                   help="phi of the link-load comparison run")
    p.add_argument("--variant", choices=("exact", "shifted"), default="exact")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--per-session", type=int, default=harness.PER_SESSION)
    _add_output(p)

    p = sub.add_parser("gen-butterfly", help="write the butterfly instance document")
    p.add_argument("--size", type=float, default=harness.OFFLINE_SIZE)
    p.add_argument("--mode", choices=("offline", "mincost"), default="offline")
    p.add_argument("--epsilon", type=float)
    p.add_argument("--output", "-o", help="file to write (stdout if omitted)")

    p = sub.add_parser("gen-trace", help="write a seeded online butterfly trace document")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--per-session", type=int, default=harness.PER_SESSION)
    p.add_argument("--size", type=float, default=harness.ONLINE_SIZE)
    p.add_argument("--phi", type=float, default=1.0)
    p.add_argument("--variant", choices=("exact", "shifted"), default="exact")
    p.add_argument("--output", "-o", help="file to write (stdout if omitted)")
    return parser


def _load(args, mode: str) -> harness.InstanceDocument:
    if args.instance:
        doc = harness.load_document(args.instance)
        doc.mode = mode
        return doc
    return harness.butterfly_document(mode, seed=getattr(args, "seed", 0))


def _override(doc, **values) -> None:
    for key, val in values.items():
        if val is not None:
            doc.params[key] = val
    if "omega" in values and values["omega"] is not None:
        doc.params.pop("epsilon", None)
    if "epsilon" in values and values["epsilon"] is not None:
        doc.params.pop("omega", None)


def _write_doc(doc, path) -> None:
    text = json.dumps(doc.to_dict(), indent=2) + "\n"
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _finish(report, args) -> int:
    if args.out:
        for path in harness.emit_report(report, args.out, args.format):
            print(f"wrote {path}")
    for c in report.certificates:
        print(f"{'PASS' if c['passed'] else 'FAIL'}  {c['name']}  {c.get('detail', '')}")
        for v in c.get("violations", [])[:5]:
            print(f"      {v}")
    return 0 if report.ok else 1


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.verb == "gen-butterfly":
            params = {} if args.epsilon is None else {"epsilon": args.epsilon}
            _write_doc(harness.butterfly_document(args.mode, size=args.size, **params),
                       args.output)
            return 0
        if args.verb == "gen-trace":
            doc = harness.butterfly_document("online", size=args.size, seed=args.seed,
                                             count=args.per_session, phi=args.phi,
                                             variant=args.variant)
            _write_doc(doc, args.output)
            return 0
        if args.verb == "sweep":
            rep = harness.run_sweep(args.epsilons, args.phis, args.seed, args.variant,
                                    args.per_session, args.epsilon, args.phi)
            print("epsilon,lambda,normalized_time")
            for row in rep.offline_rows:
                print(f"{row['epsilon']:g},{row['lambda']:.6f},{row['normalized_time']:.3f}")
            print("phi,acceptance_ratio,violation_ratio")
            for row in rep.online_rows:
                print(f"{row['phi']:g},{row['acceptance_ratio']:.4f},{row['violation_ratio']:.4f}")
            print(f"bottleneck offline={rep.offline_bottleneck} online={rep.online_bottleneck}")
            return _finish(rep, args)

        doc = _load(args, args.verb)
        if args.verb == "offline":
            _override(doc, epsilon=args.epsilon, omega=args.omega)
        elif args.verb == "online":
            _override(doc, phi=args.phi, variant=args.variant, sigma=args.sigma,
                      lambda_thr=args.lambda_thr)
        else:
            _override(doc, variant=args.variant, prices=args.price)
        rep = harness.run_experiment(doc)
    except (DocumentError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    res = rep.results
    if rep.mode == "offline":
        print(f"lambda={res['lambda']:.6f} phases={res['phases']} epsilon={res['epsilon']:.6g} "
              f"bottleneck={res['bottleneck']}")
    elif rep.mode == "online":
        print(f"acceptance={res['acceptance_ratio']:.4f} violation={res['violation_ratio']:.4f} "
              f"bottleneck={res['bottleneck']}")
    else:
        for item in res["requests"]:
            print(f"{item['request']}: L={item['L']:.9g} granularity={item['granularity']:.6g}")
    return _finish(rep, args)


if __name__ == "__main__":
    sys.exit(main())
