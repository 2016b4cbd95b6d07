"""Command line front end: analysis tables, constructions, BLER and
throughput simulations. Configuration comes from flags or a JSON file whose
keys mirror SimConfig; flags override the file. Results print as text and can
be written to .csv or .json (JSON carries a config echo)."""

from __future__ import annotations

import argparse
import csv
import json
import sys

import numpy as np

from .constellation import build_constellation
from .construction import (construct_ga, construct_rf1, construct_rf2,
                           finite_bl_values, pw_sequence)
from .mp_analysis import level_stats
from .sim import (SimConfig, SimCurve, build_bler_lut, load_mcs_table,
                  min_required_snr, run_bler, run_throughput)


def _parse_grid(args) -> tuple[float, ...]:
    if args.snr_db:
        return tuple(float(s) for s in args.snr_db)
    return tuple(np.arange(args.snr_start, args.snr_stop + args.snr_step / 2,
                           args.snr_step))


def _write_curve(curve: SimCurve, out: str | None) -> None:
    if out is None:
        return
    if out.endswith(".json"):
        with open(out, "w") as fh:
            json.dump(curve.to_json_dict(), fh, indent=2)
    elif out.endswith(".csv"):
        with open(out, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["snr_db", curve.metric, "blocks", "errors"])
            w.writerows(curve.rows())
    else:
        raise SystemExit(f"unsupported output extension: {out}")
    print(f"wrote {out}")


def _print_curve(curve: SimCurve) -> None:
    print(f"# {curve.metric}  (wall time {curve.wall_time_s:.1f} s)")
    print(f"{'snr_db':>8}  {curve.metric:>12}  {'blocks':>8}  {'errors':>7}")
    for s, v, b, e in curve.rows():
        print(f"{s:8.2f}  {v:12.6g}  {b:8d}  {e:7d}")


def _cmd_analyze(args) -> None:
    if not args.snr_db and args.snr_start is None:
        raise SystemExit("analyze needs --snr-db or --snr-start/--snr-stop")
    c = build_constellation(args.m)
    rows = []
    for snr in _parse_grid(args):
        cap, disp, total = level_stats(c, snr)
        row = {"snr_db": snr, "capacity_total": total}
        for k in range(c.m):
            row[f"i_w{k + 1}"] = cap[k]
            row[f"v_w{k + 1}"] = disp[k]
        if args.n:
            mv = finite_bl_values(c, snr, args.n, args.eps)
            for k in range(c.m):
                row[f"m_w{k + 1}"] = mv[k]
        rows.append(row)
    cols = list(rows[0].keys())
    print("  ".join(f"{h:>14}" for h in cols))
    for row in rows:
        print("  ".join(f"{row[h]:14.8f}" for h in cols))
    if args.out:
        _write_rows(rows, cols, args.out)


def _write_rows(rows: list[dict], cols: list[str], out: str) -> None:
    if out.endswith(".json"):
        with open(out, "w") as fh:
            json.dump(rows, fh, indent=2)
    elif out.endswith(".csv"):
        with open(out, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=cols)
            w.writeheader()
            w.writerows(rows)
    else:
        raise SystemExit(f"unsupported output extension: {out}")
    print(f"wrote {out}")


def _cmd_construct(args) -> None:
    k = args.k if args.k is not None else int(np.floor(args.m * args.n * args.rate + 0.5))
    seq = pw_sequence(args.n) if args.seq == "pw" else None
    if args.method == "rf1":
        cc = construct_rf1(args.m, k, args.n, seq=seq)
    elif args.method == "rf2":
        eps = args.eps if args.eps is not None else 0.1
        cc = construct_rf2(args.m, k, args.n, eps=eps, seq=seq)
    else:
        if args.snr_db is None or len(args.snr_db) != 1:
            raise SystemExit("ga construction needs exactly one --snr-db")
        cc = construct_ga(build_constellation(args.m), k, args.n,
                          float(args.snr_db[0]))
    print(f"# method={cc.method} m={cc.m} n={cc.n} k={cc.k_total} "
          f"design_snr_db={cc.design_snr_db} eps={cc.eps}")
    rows = []
    for lvl in range(cc.m):
        rows.append({"level": lvl + 1, "k": int(cc.allocation.counts[lvl]),
                     "crc_len": cc.crc_lens[lvl],
                     "info_set": " ".join(map(str, cc.info_sets[lvl]))})
        print(f"level {lvl + 1}: K={rows[-1]['k']} crc={rows[-1]['crc_len']} "
              f"A={rows[-1]['info_set']}")
    if args.out:
        _write_rows(rows, ["level", "k", "crc_len", "info_set"], args.out)


def _load_config(args, need_mk: bool = True) -> SimConfig:
    raw = {}
    if args.config:
        with open(args.config) as fh:
            raw = json.load(fh)
    grid = raw.get("snr_grid_db")
    if args.snr_db or args.snr_start is not None:
        if args.snr_start is not None and not args.snr_db:
            if args.snr_stop is None:
                raise SystemExit("--snr-stop required with --snr-start")
        grid = list(_parse_grid(args))
    if grid is None:
        raise SystemExit("an SNR grid is required (--snr-db / --snr-start or config)")
    merged = dict(
        method=args.method or raw.get("method", "rf2"),
        m=args.m or raw.get("m", 0),
        n=args.n or raw.get("n", 256),
        k=args.k if args.k is not None else raw.get("k", 0),
        snr_grid_db=tuple(grid),
        list_size=args.list_size or raw.get("list_size", 8),
        max_blocks=args.max_blocks or raw.get("max_blocks", 100_000),
        max_errors=args.max_errors or raw.get("max_errors", 100),
        seed=args.seed if args.seed is not None else raw.get("seed", 0),
        eps=args.eps if args.eps is not None else raw.get("eps", 0.1),
    )
    if need_mk and merged["k"] == 0 and args.rate is not None:
        merged["k"] = int(np.floor(merged["m"] * merged["n"] * args.rate + 0.5))
    return SimConfig(**merged)


def _cmd_bler(args) -> None:
    cfg = _load_config(args)
    curve = run_bler(cfg, workers=args.workers)
    _print_curve(curve)
    _write_curve(curve, args.out)


def _cmd_throughput(args) -> None:
    cfg = _load_config(args, need_mk=False)
    table = load_mcs_table(args.mcs_table)
    if args.mcs:
        wanted = set(args.mcs)
        table = tuple(e for e in table if e.index in wanted)
        if not table:
            raise SystemExit("no MCS entries left after --mcs filter")
    lut = build_bler_lut(cfg.method, table, cfg.n, list_size=cfg.list_size,
                         seed=cfg.seed + 1, eps=cfg.eps,
                         max_blocks=args.lut_blocks, max_errors=args.lut_errors,
                         workers=args.workers)
    curve = run_throughput(cfg, table, lut, workers=args.workers)
    _print_curve(curve)
    _write_curve(curve, args.out)


def _cmd_minsnr(args) -> None:
    table = load_mcs_table(args.mcs_table)
    mcs = table[args.mcs_index]
    res = min_required_snr(args.method or "rf2", mcs, args.n or 256, args.target_bler,
                           list_size=args.list_size, seed=args.seed or 0,
                           eps=args.eps if args.eps is not None else 0.1,
                           max_blocks=args.max_blocks or 100_000,
                           max_errors=args.max_errors or 100,
                           workers=args.workers)
    flag = "  (warning: non-monotone probes)" if res.warned else ""
    print(f"mcs {mcs.index} (m={mcs.m}, rate {mcs.rate_x1024}/1024): "
          f"required snr {res.snr_db:.3f} dB at BLER {args.target_bler}{flag}")


def _add_common(p) -> None:
    p.add_argument("--config", help="JSON file with SimConfig keys")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", help="output file (.csv or .json)")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--method", choices=("rf1", "rf2", "ga"), default=None)
    p.add_argument("--m", type=int, default=0, help="bits per symbol")
    p.add_argument("--n", type=int, default=0, help="component block length")
    p.add_argument("--k", type=int, default=None, help="total information bits")
    p.add_argument("--rate", type=float, default=None, help="per-component rate K/(mN)")
    p.add_argument("--list-size", type=int, default=0)
    p.add_argument("--eps", type=float, default=None)
    p.add_argument("--max-blocks", type=int, default=0)
    p.add_argument("--max-errors", type=int, default=0)
    p.add_argument("--snr-db", type=float, nargs="*", default=None,
                   help="explicit SNR grid points (dB)")
    p.add_argument("--snr-start", type=float, default=None)
    p.add_argument("--snr-stop", type=float, default=None)
    p.add_argument("--snr-step", type=float, default=0.5)


def main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(prog="mlcpcm",
                                 description="multilevel polar-coded modulation toolkit")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="per-level capacity/dispersion table")
    _add_common(p)
    p.set_defaults(fn=_cmd_analyze)

    p = sub.add_parser("construct", help="emit per-level information sets")
    _add_common(p)
    p.add_argument("--seq", choices=("5g", "pw"), default="5g")
    p.set_defaults(fn=_cmd_construct)

    p = sub.add_parser("bler", help="Monte Carlo BLER curve")
    _add_common(p)
    p.set_defaults(fn=_cmd_bler)

    p = sub.add_parser("throughput", help="adaptive-MCS fading throughput")
    _add_common(p)
    p.add_argument("--mcs-table", default=None, help="CSV overriding the packaged table")
    p.add_argument("--mcs", type=int, nargs="*", default=None,
                   help="restrict to these MCS indices")
    p.add_argument("--lut-blocks", type=int, default=2000)
    p.add_argument("--lut-errors", type=int, default=50)
    p.set_defaults(fn=_cmd_throughput)

    p = sub.add_parser("minsnr", help="required SNR for a BLER target")
    _add_common(p)
    p.add_argument("--mcs-table", default=None)
    p.add_argument("--mcs-index", type=int, required=True)
    p.add_argument("--target-bler", type=float, required=True)
    p.set_defaults(fn=_cmd_minsnr)

    args = ap.parse_args(argv)
    if args.command == "analyze":
        if not args.m:
            ap.error("analyze requires --m")
        if args.eps is None:
            args.eps = 0.1
    if args.command == "construct":
        if not args.m or not args.n:
            ap.error("construct requires --m and --n")
        if args.k is None and args.rate is None:
            ap.error("construct requires --k or --rate")
        if args.method is None:
            args.method = "rf2"
    args.fn(args)
    return 0


if __name__ == "__main__":
    sys.exit(main())
