"""Command-line entry point: ``edgefl <subcommand> ...``.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from edgefl import comm, engine, metrics, optimizers, profiles, report
from edgefl.config import config_digest, load_config
from edgefl.partition import PartitionSpec, dirichlet_partition, write_manifest

OUTPUT_DIR_ENV = "EDGEFL_OUTPUT_DIR"
COST_LOCAL_STEPS = 2


def _out_dir(arg: str | None, default: str) -> Path:
    return Path(arg or os.environ.get(OUTPUT_DIR_ENV) or default)


def cmd_partition(args) -> int:
    if args.config:
        cfg = load_config(args.config)
        spec = PartitionSpec(cfg.task.n_samples, cfg.n_clients, cfg.alpha, cfg.seed)
    else:
        spec = PartitionSpec(args.n_samples, args.clients, args.alpha, args.seed)
    shards = dirichlet_partition(spec)
    if args.out:
        write_manifest(shards, args.out)
        print(f"wrote {len(shards)} shards to {args.out}")
    else:
        print("client_id,n_samples")
        for s in shards:
            print(f"{s.client_id},{s.n_samples}")
    return 0


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    out = _out_dir(args.out, os.path.join("runs", config_digest(cfg)[:12]))
    rep = engine.run_experiment(cfg)
    manifest = report.write_run(rep, out)
    s = rep.summary
    print(f"strategy={s['strategy']} rounds={s['rounds']} final_loss={s['final_loss']} "
          f"rounds_to_target={s['rounds_to_target']}")
    for p in manifest.outputs:
        print(f"wrote {p}")
    return 0


def cost_row(model: str, mode: str, scen: str, device: str, clients: int, rounds: int | None) -> dict:
    prof = profiles.model_profile(model)
    sc = comm.scenario(scen)
    payload = comm.payload_bits(prof, "full_model" if mode == "full" else "peft")
    t_comm = comm.comm_time(sc, payload)
    batch = optimizers.BATCH_SIZE.get(model, 1)
    hw = profiles.hardware_profile(device)
    t_comp = COST_LOCAL_STEPS * hw.step_time(model, batch) if model in hw.step_times else None
    joules, kwh = comm.round_comm_energy(sc, payload, clients)
    return {
        "training": mode, "comm": scen, "device": device, "model": model,
        "payload_bits": payload.bits, "batch": batch, "t_comp_s": t_comp, "t_comm_s": t_comm,
        "G": None if t_comp is None else metrics.granularity(t_comp, t_comm),
        "kwh_round": kwh, "rounds": rounds, "kwh_total": None if rounds is None else kwh * rounds,
    }


def _fmt(v) -> str:
    if v is None:
        return "-"
    if isinstance(v, float):
        return f"{v:.4g}"
    return str(v)


def cmd_cost(args) -> int:
    table = comm.published_table()
    clients = args.clients or table["clients_per_round"]
    if args.model:
        rounds = args.rounds if args.rounds is not None else table["rounds"].get(args.model)
        row = cost_row(args.model, args.mode, args.scenario, args.device, clients, rounds)
        print(f"model={args.model} training={args.mode} scenario={args.scenario} "
              f"device={args.device} clients={clients}")
        print(f"payload_bits: {row['payload_bits']}")
        print(f"J/bit: {comm.per_bit_energy(comm.scenario(args.scenario)):.6g}")
        print(f"T_comm_s: {row['t_comm_s']:.6g}")
        if row["G"] is not None:
            print(f"T_comp_s: {row['t_comp_s']:.6g}")
            print(f"G: {row['G']:.6g}")
        print(f"kWh/round: {row['kwh_round']:.4f}")
        if rounds is not None:
            print(f"kWh total ({rounds} rounds): {row['kwh_total']:.4f}")
        return 0

    cols = ("training", "comm", "device", "model", "payload_bits", "t_comp_s", "t_comm_s", "G",
            "kwh_round", "rounds", "kwh_total")
    print(",".join(cols))
    for mode in ("full", "peft"):
        for scen in ("lte", "gbit1"):
            for device in ("a100", "orin"):
                for model in ("small", "base", "large"):
                    row = cost_row(model, mode, scen, device, clients, table["rounds"][model])
                    print(",".join(_fmt(row[c]) for c in cols))
    return 0


def cmd_mfu(args) -> int:
    prof = profiles.model_profile(args.model)
    peak = args.peak if args.peak else profiles.hardware_profile(args.device).peak_flops
    value = metrics.mfu(prof, args.tps, peak, args.mode)
    print(f"MFU: {value:.6f} ({100 * value:.2f}%)")
    return 0


def cmd_energy(args) -> int:
    if args.trace:
        avg, joules = metrics.trace_stats(metrics.load_power_trace(args.trace))
        print(f"avg_power_W: {avg:.4f}")
        print(f"energy_J: {joules:.4f}")
        watts = avg
    elif args.watts is not None:
        watts = args.watts
    else:
        raise ValueError("energy needs --watts or --trace")
    if args.tps is not None:
        print(f"{metrics.energy_efficiency(args.tps, watts):.2f}")
    return 0


def cmd_compare(args) -> int:
    cfg = load_config(args.config)
    reports = engine.compare_strategies(cfg)
    rows = report.strategy_table(reports)
    text = report.strategy_table_csv(rows)
    print(text, end="")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "compare.csv").write_text(text)
        for rep in reports:
            report.write_run(rep, out / rep.summary["strategy"])
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="edgefl", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", metavar="{partition,train,cost,mfu,energy,compare}")

    sp = sub.add_parser("partition", help="emit a Dirichlet shard manifest")
    sp.add_argument("--config")
    sp.add_argument("--n-samples", type=int, default=14732)
    sp.add_argument("--clients", type=int, default=100)
    sp.add_argument("--alpha", type=float, default=1.0)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", help="CSV path (stdout if omitted)")
    sp.set_defaults(func=cmd_partition)

    sp = sub.add_parser("train", help="run one federated experiment")
    sp.add_argument("--config", required=True)
    sp.add_argument("--out", help=f"output directory (env {OUTPUT_DIR_ENV} also works)")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("cost", help="per-round communication cost report")
    sp.add_argument("--model", choices=sorted(profiles.model_presets()))
    sp.add_argument("--mode", choices=("full", "peft"), default="full")
    sp.add_argument("--scenario", choices=sorted(comm.scenario_presets()), default="lte")
    sp.add_argument("--device", choices=sorted(profiles.hardware_presets()), default="orin")
    sp.add_argument("--clients", type=int)
    sp.add_argument("--rounds", type=int)
    sp.set_defaults(func=cmd_cost)

    sp = sub.add_parser("mfu", help="model-FLOP utilisation from throughput")
    sp.add_argument("--model", required=True, choices=sorted(profiles.model_presets()))
    sp.add_argument("--tps", type=float, required=True)
    sp.add_argument("--device", choices=sorted(profiles.hardware_presets()), default="a100")
    sp.add_argument("--peak", type=float, help="peak FLOP/s (overrides --device)")
    sp.add_argument("--mode", choices=metrics.MFU_MODES, default="attention_aware")
    sp.set_defaults(func=cmd_mfu)

    sp = sub.add_parser("energy", help="energy efficiency (tokens/s per W)")
    sp.add_argument("--tps", type=float)
    sp.add_argument("--watts", type=float)
    sp.add_argument("--trace", help="power trace CSV with header t_s,watts")
    sp.set_defaults(func=cmd_energy)

    sp = sub.add_parser("compare", help="run all four strategies on one config")
    sp.add_argument("--config", required=True)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_compare)
    return p


def cli_dispatch(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 2
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (engine.ConfigError, optimizers.DivergenceError, OSError, ValueError, KeyError) as exc:
        print(f"edgefl {args.command}: error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(cli_dispatch())


if __name__ == "__main__":
    main()
