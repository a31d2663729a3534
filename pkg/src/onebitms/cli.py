"""Command-line interface.

Subcommands: ``gmra build`` (fit and save a model), ``encode`` (generate or
save a measurement ensemble, optionally emitting bit patterns), ``recover``
(run a recovery variant on signals or saved bits), ``bench`` (run a full
experiment grid from a JSON config), ``width`` (width diagnostics from a
JSON config), and ``audit`` (print model diagnostics).
"""

import argparse
import json
import sys

import numpy as np

from . import __version__
from .datasets import load_cloud, sample_sphere, save_cloud
from .gmra import audit_gmra, build_gmra, load_gmra, save_gmra
from .harness import ExperimentConfig, run_experiment
from .measure import (
    MeasurementEnsemble,
    load_ensemble,
    quantize_rows,
    save_ensemble,
)
from .recovery import CenterSignCache, oms, oms_simple, recover_center_only
from .width import (
    ManifoldMeta,
    check_union_width,
    estimate_width,
    finite_set_sampler,
    level_set_sampler,
    riemannian_width_bound,
    union_sampler,
)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="onebitms",
        description="One-bit compressed sensing over multiscale manifold models",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    gmra = sub.add_parser("gmra", help="model operations")
    gmra_sub = gmra.add_subparsers(dest="gmra_command", required=True)
    build = gmra_sub.add_parser("build", help="fit a model from a point-cloud file")
    build.add_argument("--input", required=True, help="point-cloud file (OMSP)")
    build.add_argument("--d", type=int, required=True, help="intrinsic dimension")
    build.add_argument("--jmin", type=int, default=None)
    build.add_argument("--jmax", type=int, default=None)
    build.add_argument("--out", required=True, help="model output file (OMSG)")

    encode = sub.add_parser("encode", help="generate a measurement ensemble")
    encode.add_argument("--gmra", required=True, help="model file fixing the dimension")
    encode.add_argument("--m", type=int, required=True, help="number of measurements")
    encode.add_argument("--seed", type=int, default=0)
    encode.add_argument("--out", required=True, help="ensemble output file (OMSA)")
    encode.add_argument("--input", help="optional point-cloud file to quantize")
    encode.add_argument("--bits-out", help="write one +-1 line per quantized signal")

    recover = sub.add_parser("recover", help="recover signals from one-bit data")
    recover.add_argument("--gmra", required=True)
    recover.add_argument("--j", type=int, required=True)
    recover.add_argument(
        "--variant",
        choices=["oms", "oms-simple", "oms-plus", "center"],
        default="oms",
    )
    recover.add_argument("--R", type=float, default=1.5)
    recover.add_argument("--beam", type=int, default=None, help="beam width (default: exhaustive)")
    recover.add_argument("--ensemble", required=True, help="ensemble file (OMSA)")
    recover.add_argument("--input", help="point-cloud file of true signals to encode+recover")
    recover.add_argument("--bits", help="file of +-1 lines to recover directly")
    recover.add_argument("--out", help="write recovered signals as a point cloud")

    bench = sub.add_parser("bench", help="run an experiment grid")
    bench.add_argument("--config", required=True, help="JSON experiment config")

    width = sub.add_parser("width", help="width diagnostics")
    width.add_argument("--config", required=True, help="JSON width config")

    audit = sub.add_parser("audit", help="print model diagnostics")
    audit.add_argument("--gmra", required=True)
    audit.add_argument("--input", help="point-cloud file for sample-based checks")
    return parser


def _cmd_gmra_build(args):
    cloud = load_cloud(args.input)
    model = build_gmra(cloud, args.d, j_min=args.jmin, j_max=args.jmax)
    save_gmra(model, args.out)
    print(f"built model: d={model.d} D={model.D} levels={model.scales()} -> {args.out}")
    return 0


def _cmd_encode(args):
    model = load_gmra(args.gmra)
    ensemble = MeasurementEnsemble.generate(args.m, model.D, args.seed)
    save_ensemble(ensemble, args.out)
    print(f"ensemble m={ensemble.m} D={ensemble.D} seed={ensemble.seed} -> {args.out}")
    if args.input and args.bits_out:
        cloud = load_cloud(args.input)
        bits = quantize_rows(ensemble, cloud.data)
        _write_bits(bits, args.bits_out)
        print(f"bits for {cloud.n} signals -> {args.bits_out}")
    return 0


def _write_bits(bits, path):
    with open(path, "w") as fh:
        for row in bits:
            fh.write(" ".join(str(int(b)) for b in row) + "\n")


def _read_bits(path):
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append([int(tok) for tok in line.split()])
    return np.asarray(rows, dtype=np.int8)


def _cmd_recover(args):
    model = load_gmra(args.gmra)
    ensemble = load_ensemble(args.ensemble)
    if model.D != ensemble.D:
        print(
            f"error: model dimension {model.D} != ensemble dimension {ensemble.D}",
            file=sys.stderr,
        )
        return 2
    if bool(args.input) == bool(args.bits):
        print("error: pass exactly one of --input or --bits", file=sys.stderr)
        return 2

    truth = None
    if args.input:
        cloud = load_cloud(args.input)
        truth = cloud.data
        bits = quantize_rows(ensemble, truth)
    else:
        bits = _read_bits(args.bits)

    search = "beam" if args.beam else "exhaustive"
    beam_width = args.beam or 10
    cache = CenterSignCache(model, ensemble)
    recovered = np.full((bits.shape[0], model.D), np.nan)
    infeasible = 0
    for i, y in enumerate(bits):
        if args.variant == "oms":
            res = oms(model, args.j, ensemble, y, variant="linear",
                      search=search, beam_width=beam_width, cache=cache)
        elif args.variant == "oms-plus":
            res = oms(model, args.j, ensemble, y, variant="plus",
                      search=search, beam_width=beam_width, cache=cache)
        elif args.variant == "oms-simple":
            res = oms_simple(model, args.j, ensemble, y, R=args.R,
                             search=search, beam_width=beam_width, cache=cache)
        else:
            res = recover_center_only(model, args.j, ensemble, y,
                                      search=search, beam_width=beam_width, cache=cache)
        if res.feasible:
            recovered[i] = res.x_star
        else:
            infeasible += 1

    if truth is not None:
        feas = ~np.isnan(recovered[:, 0])
        if np.any(feas):
            errs = np.linalg.norm(truth[feas] - recovered[feas], axis=1)
            errs /= np.linalg.norm(truth[feas], axis=1)
            print(
                f"recovered {int(np.count_nonzero(feas))}/{bits.shape[0]} signals, "
                f"mean relative error {float(np.mean(errs)):.6g}"
            )
    if infeasible:
        print(f"{infeasible} infeasible recoveries")
    if args.out:
        save_cloud(recovered, args.out)
        print(f"recovered signals -> {args.out}")
    return 0


def _cmd_bench(args):
    with open(args.config) as fh:
        raw = json.load(fh)
    config = ExperimentConfig.from_dict(raw)
    rows = run_experiment(config)
    for row in rows:
        print(row.to_csv())
    if config.output:
        print(f"wrote {config.output}")
    return 0


def _cmd_width(args):
    with open(args.config) as fh:
        cfg = json.load(fh)
    d = cfg.get("d", 2)
    D = cfg.get("D", 20)
    n = cfg.get("n", 500)
    j = cfg.get("j", 4)
    trials = cfg.get("trials", 1000)
    seed = cfg.get("seed", 0)
    cloud = sample_sphere(d, D, n, seed)
    model = build_gmra(cloud, d, j_min=cfg.get("j_min"), j_max=cfg.get("j_max", j))
    sampler_m = finite_set_sampler(cloud.data)
    sampler_mj = level_set_sampler(model, j, cloud.data)
    sampler_u = union_sampler(sampler_m, sampler_mj)
    w_m = estimate_width(sampler_m, trials, seed=seed)
    w_mj = estimate_width(sampler_mj, trials, seed=seed)
    w_u = estimate_width(sampler_u, trials, seed=seed)
    report = check_union_width(w_m, w_mj, w_u)

    lines = ["set,mean,std_err,trials,seed,note"]
    lines.append(f"sample,{w_m.mean!r},{w_m.std_err!r},{trials},{seed},")
    lines.append(f"level-{j},{w_mj.mean!r},{w_mj.std_err!r},{trials},{seed},")
    lines.append(f"union,{w_u.mean!r},{w_u.std_err!r},{trials},{seed},")
    lines.append(
        f"union-check,,,{trials},{seed},"
        f"lower_ok={report.lower_ok} upper_ok={report.upper_ok}"
    )
    if "riemann" in cfg:
        r = cfg["riemann"]
        meta = ManifoldMeta(
            d=r["d"], diam=r["diam"], reach=r["reach"], volume=r["volume"],
            spherical=r.get("spherical", False),
        )
        bound = riemannian_width_bound(meta, C=r.get("C", 1.0), c=r.get("c", 1.0))
        lines.append(f"riemann-bound,{bound!r},0.0,1,{seed},C={r.get('C', 1.0)} c={r.get('c', 1.0)}")
    text = "\n".join(lines) + "\n"
    out = cfg.get("output")
    if out:
        with open(out, "w", newline="") as fh:
            fh.write(text)
        print(f"wrote {out}")
    else:
        sys.stdout.write(text)
    return 0


def _cmd_audit(args):
    model = load_gmra(args.gmra)
    points = load_cloud(args.input).data if args.input else None
    print(audit_gmra(model, points))
    return 0


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "gmra":
        return _cmd_gmra_build(args)
    if args.command == "encode":
        return _cmd_encode(args)
    if args.command == "recover":
        return _cmd_recover(args)
    if args.command == "bench":
        return _cmd_bench(args)
    if args.command == "width":
        return _cmd_width(args)
    if args.command == "audit":
        return _cmd_audit(args)
    raise AssertionError("unreachable")  # pragma: no cover


if __name__ == "__main__":
    sys.exit(main())
