"""Command-line front end: ``semiprop <subcommand> --config FILE --out DIR``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .experiments import (DEFAULT_PARAMS, ConfigError, ExperimentConfig, config_help, flow_check, load_config,
                          parse_config, propagate_file, run_sweep, statphase_check, write_json,
                          write_rows, write_sweep)
from .hamiltonians import builtin_model
from .wavefunction import read_wavefunction, write_wavefunction

SUBCOMMANDS = ("propagate", "hk-kernel", "vanvleck", "statphase-check", "sweep", "flow-check")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="semiprop", description="Semiclassical propagator experiments.",
                                 epilog=config_help(), formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = ap.add_subparsers(dest="command", required=True)
    helps = {
        "propagate": "propagate a wave-function file ([propagate], [model])",
        "hk-kernel": "Herman-Kluk kernel values ([sweep], [quadrature])",
        "vanvleck": "Van Vleck kernel values ([sweep])",
        "statphase-check": "stationary-phase rate check ([statphase])",
        "sweep": "multi-method sweep with rate fits ([sweep], [reference])",
        "flow-check": "symplectic diagnostics on random trajectories ([flow])",
    }
    for name in SUBCOMMANDS:
        p = sub.add_parser(name, help=helps[name], epilog=config_help(),
                           formatter_class=argparse.RawDescriptionHelpFormatter)
        p.add_argument("--config", type=Path, help="INI configuration file")
        p.add_argument("--out", type=Path, default=Path("out"), help="output directory")
        p.add_argument("--threads", type=int, default=1, help="worker threads for sweep cells")
        p.add_argument("--seed", type=int, default=0, help="random seed")
    return ap


def _setup_log(out: Path) -> logging.Handler:
    out.mkdir(parents=True, exist_ok=True)
    h = logging.FileHandler(out / "run.log", mode="w")
    h.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    root = logging.getLogger("semiprop")
    root.setLevel(logging.INFO)
    root.addHandler(h)
    return h


def _sections(args):
    return load_config(args.config) if args.config else parse_config("")


def _sweep(args, sec, methods=None, stem="sweep"):
    if methods is not None:
        sec["sweep"]["methods"] = methods
    cfg = ExperimentConfig.from_sections(sec, seed=args.seed)
    rows, summary = run_sweep(cfg, threads=args.threads)
    csv_path, json_path = write_sweep(rows, summary, args.out, stem)
    print(f"{stem}: {len(rows)} rows -> {csv_path}; pass={summary['pass']}")
    ok = summary["failed_cells"] == 0 and all(f["pass"] for f in summary["fits"])
    return 0 if ok else 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handler = _setup_log(args.out)
    log = logging.getLogger("semiprop.cli")
    try:
        sec = _sections(args)
        log.info("command %s seed %d", args.command, args.seed)
        if args.command == "sweep":
            return _sweep(args, sec)
        if args.command in ("hk-kernel", "vanvleck"):
            m = "hk" if args.command == "hk-kernel" else "vanvleck"
            methods = [m] + [x for x in sec["sweep"]["methods"] if x == "closed_form"]
            return _sweep(args, sec, methods, stem=args.command)
        if args.command == "statphase-check":
            s = sec["statphase"]
            rep = statphase_check(s["mu"], s["nu"], s["sigma"], ks=tuple(s["k"]), hbars=s["hbar"],
                                  support=tuple(s["support"]), gauss_width=s["gauss_width"], tol=s["tol"])
            rows = [{"hbar": h, "k": r["k"], "abs_error": e,
                     "predicted_error_exponent": r["predicted_error_exponent"], "oracle_error": f}
                    for r in rep["results"] for h, e, f in zip(rep["hbar"], r["errors"], r["oracle_error"])]
            write_rows(rows, args.out / "statphase.csv",
                       ["hbar", "k", "abs_error", "predicted_error_exponent", "oracle_error"])
            write_json(rep, args.out / "statphase.json")
            for r in rep["results"]:
                print(f"k={r['k']}: exponent {r['fit']['order']:.3f} (need >= {r['required']:.3f}) "
                      f"{'PASS' if r['pass'] else 'FAIL'}")
            return 0 if rep["pass"] else 1
        if args.command == "flow-check":
            f = sec["flow"]
            rows, summ = flow_check(f["models"], f["n_traj"], f["t_max"], f["box"], seed=args.seed)
            fields = list(dict.fromkeys(k for r in rows for k in r))
            write_rows(rows, args.out / "flow.csv", fields)
            write_json(summ, args.out / "flow.json")
            print(f"flow-check: {summ['n_traj']} trajectories, pass={summ['pass']}")
            return 0 if summ["pass"] else 1
        if args.command == "propagate":
            p, m = sec["propagate"], sec["model"]
            if not p["input"]:
                raise ConfigError("[propagate] input is required")
            model = builtin_model(m["name"], tuple(m["params"] or ()) or DEFAULT_PARAMS.get(m["name"], ()))
            psi0 = read_wavefunction(p["input"])
            outs = propagate_file(model, psi0, p["t"], p["method"], p["steps"])
            summary = {"model": model.name, "t": p["t"], "input_norm": psi0.norm(), "outputs": {}}
            for name, psi in outs.items():
                path = args.out / f"psi_{name}.dat"
                write_wavefunction(psi, path)
                summary["outputs"][name] = {"file": str(path), "norm": psi.norm()}
            if len(outs) == 2:
                summary["relative_l2_difference"] = outs["hk"].relative_error(outs["split_step"])
            write_json(summary, args.out / "propagate.json")
            print(f"propagate: wrote {len(outs)} wave function(s) to {args.out}")
            return 0
    except (ConfigError, OSError, ValueError) as exc:
        log.error("%s", exc)
        print(f"semiprop: error: {exc}", file=sys.stderr)
        return 2
    finally:
        logging.getLogger("semiprop").removeHandler(handler)
        handler.close()
    return 2


if __name__ == "__main__":
    sys.exit(main())
