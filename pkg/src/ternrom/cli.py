"""Command-line front end.

Subcommands::

    ternrom make-toy    --out model.tomw [--seed S] [shape options]
    ternrom synthesize  --model PATH --out DIR [--hw CFG] [--no-cse] [--max-banks N]
    ternrom simulate    --model PATH [--prompt 1,2,3 | --prompt-len N] [--generate N]
                        [--gating on|off] [--lora CFG] [--format json|csv] [--out DIR]
    ternrom sweep density|bank-height|lora|context [options] [--out DIR]
    ternrom report      [--model bitnet-2b|PATH] [--gating on|off] [--format json|csv] [--out DIR]

``--model`` also accepts ``bitnet-2b``, the shape-only 2B-parameter
preset. Outputs go to ``--out`` when given and otherwise to stdout. They
contain no timestamps or absolute paths, so the same arguments and seed
always reproduce byte-identical files.

Exit codes: 0 success, 2 usage / invalid parameters / missing files,
3 capacity exceeded, 4 malformed input file, 5 internal invariant violated.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .arch.config import HardwareConfig, load_config
from .arch.mapping import plan_mapping
from .container import load_weights, save_weights
from .errors import CapacityError, DomainError, FormatError, InvariantError, TernromError
from .model import ActivationKind, ModelDescriptor, NormKind, bitnet_2b, make_toy_model
from .perf.report import build_report
from .perf.rom_cost import synthesize_plan
from .perf.scaling import LORA_SWEEP, context_sweep, lora_sweep, rows_to_csv
from .rom.cost import density
from .rom.netlist import emit_netlist
from .rom.synth import SweepRow, density_sweep, height_sweep
from .sim.engine import Engine
from .sim.lora import PRESETS, LoraConfig, load_lora_config, make_lora

EXIT_USAGE, EXIT_CAPACITY, EXIT_FORMAT, EXIT_INVARIANT = 2, 3, 4, 5
PRESET_MODELS = {"bitnet-2b": bitnet_2b}


# -- helpers -------------------------------------------------------------------
def _hw(args) -> HardwareConfig:
    return load_config(args.hw) if args.hw else HardwareConfig()


def _model(spec: str) -> ModelDescriptor:
    if spec in PRESET_MODELS:
        return PRESET_MODELS[spec]()
    return load_weights(spec)


def _lora(args, model: ModelDescriptor) -> LoraConfig:
    """``--lora`` names a JSON config file or a target preset (rank from ``--lora-rank``)."""
    if not args.lora:
        return LoraConfig()
    preset = args.lora.lower()
    if preset in PRESETS and not os.path.exists(args.lora):
        if model.has_weights:
            return make_lora(model, args.lora_rank, PRESETS[preset], args.seed)
        return LoraConfig(args.lora_rank, PRESETS[preset])
    return load_lora_config(args.lora, model, args.seed)


def _emit(args, filename: str, text: str):
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, filename), "w", newline="\n") as f:
            f.write(text)
    else:
        sys.stdout.write(text)


def _float_range(start: float, stop: float, step: float) -> list[float]:
    if step <= 0:
        raise DomainError("step must be positive")
    n = int(np.floor((stop - start) / step + 1e-9)) + 1
    if n <= 0:
        raise DomainError(f"empty range: start {start} > stop {stop}")
    return [round(start + i * step, 10) for i in range(n)]


def _int_list(text: str) -> list[int]:
    items = [t for t in text.split(",") if t.strip()]
    if not items:
        raise DomainError("empty list")
    try:
        return [int(t) for t in items]
    except ValueError:
        raise DomainError(f"expected comma-separated integers, got {text!r}") from None


def _sweep_csv(rows: list[SweepRow]) -> str:
    lines = [",".join(SweepRow.CSV_HEADER)]
    lines += [",".join(r.csv_fields()) for r in rows]
    return "\n".join(lines) + "\n"


# -- commands ----------------------------------------------------------------------
def cmd_make_toy(args) -> int:
    model = make_toy_model(seed=args.seed, num_layers=args.layers, hidden_dim=args.hidden, ffn_dim=args.ffn,
                           num_heads=args.heads, num_kv_heads=args.kv_heads, vocab_size=args.vocab,
                           zero_value_ratio=args.zero_ratio, norm_kind=NormKind(args.norm),
                           activation_kind=ActivationKind(args.activation), gated_ffn=args.gated)
    if not args.out:
        raise DomainError("make-toy needs --out <file>")
    os.makedirs(os.path.dirname(os.path.abspath(args.out)), exist_ok=True)
    save_weights(model, args.out)
    print(f"wrote {model.total_weights()} weights in {model.num_layers} layers to {args.out}")
    return 0


def cmd_synthesize(args) -> int:
    model = _model(args.model)
    if not model.has_weights and model.num_layers:
        raise DomainError("synthesize needs a model file with weights")
    hw = _hw(args)
    if not args.out:
        raise DomainError("synthesize needs --out <dir>")
    os.makedirs(args.out, exist_ok=True)
    plan = plan_mapping(model, hw)
    header = ["bank_id", "layer", "lane", "mvu", "index", "height", "width", "weights", "zero_bit_ratio",
              "transistors", "area_mm2", "density_MB_mm2"]
    lines = [",".join(header)]
    total_t, total_area, total_bits = 0, 0.0, 0
    for n, (b, net, cost) in enumerate(synthesize_plan(plan, model, optimize=not args.no_cse)):
        if args.max_banks is not None and n >= args.max_banks:
            break
        name = f"bank_{b.bank_id:05d}"
        with open(os.path.join(args.out, name + ".v"), "w", newline="\n") as f:
            f.write(emit_netlist(net, name))
        zbr = 1.0 - float(net.evaluate_all().mean()) if net.height else 1.0
        d = cost.to_dict()["density_MB_mm2"]
        lines.append(",".join(str(v) for v in (b.bank_id, b.layer, b.lane, b.mvu, b.index, net.height, net.width,
                                                b.weights, repr(zbr), cost.transistor_count, repr(cost.area_mm2),
                                                d if isinstance(d, str) else repr(d))))
        total_t += cost.transistor_count
        total_area += cost.area_mm2
        total_bits += cost.bits
    with open(os.path.join(args.out, "costs.csv"), "w", newline="\n") as f:
        f.write("\n".join(lines) + "\n")
    mb = total_bits / 8 / (1 << 20)
    summary = {"banks": len(lines) - 1, "transistors": total_t, "area_mm2": total_area, "megabytes": mb,
               "density_MB_per_mm2": (density(mb, total_area) if total_area > 0 else None),
               "zero_value_ratio": (model.sparsity().zero_value_ratio if model.has_weights else None),
               "cse": not args.no_cse}
    with open(os.path.join(args.out, "summary.json"), "w", newline="\n") as f:
        f.write(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(f"synthesized {summary['banks']} banks: {total_t} transistors, {total_area:.6f} mm^2")
    return 0


def _prompt(args, model: ModelDescriptor) -> list[int]:
    if args.prompt:
        return _int_list(args.prompt)
    if args.prompt_len < 1:
        raise DomainError("prompt length must be >= 1")
    rng = np.random.default_rng([args.seed, 0x70])
    return [int(t) for t in rng.integers(0, max(model.vocab_size, 1), args.prompt_len)]


def cmd_simulate(args) -> int:
    model = _model(args.model)
    hw = _hw(args)
    lora = _lora(args, model)
    prompt = _prompt(args, model)
    engine = Engine(model, hw, lora=lora)
    tokens, results = engine.generate(prompt, args.generate)
    contexts = [r.position + 1 for r in results]
    report = build_report(model, hw, args.gating == "on", lora=lora, context=contexts[-1],
                          prompt_tokens=len(prompt), plan=engine.plan, tokens=tokens, token_contexts=contexts)
    report.check_closure()
    if args.out:
        _emit(args, "tokens.txt", " ".join(map(str, tokens)) + "\n")
    _emit(args, f"report.{args.format}", report.to_json() if args.format == "json" else report.to_csv())
    return 0


def cmd_report(args) -> int:
    model = _model(args.model)
    hw = _hw(args)
    lora = _lora(args, model)
    report = build_report(model, hw, args.gating == "on", lora=lora, context=args.context)
    report.check_closure()
    _emit(args, f"report.{args.format}", report.to_json() if args.format == "json" else report.to_csv())
    return 0


def cmd_sweep(args) -> int:
    hw = _hw(args)
    if args.kind == "density":
        rows = density_sweep(args.height, args.width, _float_range(args.start, args.stop, args.step), args.seed,
                             hw.area_calibration)
        _emit(args, "density_sweep.csv", _sweep_csv(rows))
    elif args.kind == "bank-height":
        rows = height_sweep(_int_list(args.heights), args.width, args.zero_bit_ratio, args.seed,
                            hw.area_calibration)
        _emit(args, "bank_height_sweep.csv", _sweep_csv(rows))
    elif args.kind == "lora":
        presets = [p.strip().lower() for p in args.presets.split(",") if p.strip()]
        rows = lora_sweep(_model(args.model), hw, args.lora_rank, presets, args.gating == "on")
        _emit(args, "lora_sweep.csv", rows_to_csv(rows))
    else:
        rows = context_sweep(_model(args.model), hw, _int_list(args.contexts), args.gating == "on")
        _emit(args, "context_sweep.csv", rows_to_csv(rows))
    return 0


# -- parser --------------------------------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--hw", help="hardware config (INI, [hardware] section)")
    common.add_argument("--seed", type=int, default=0, help="seed for every randomized input")
    common.add_argument("--out", help="output directory (file for make-toy); stdout when omitted")

    run = argparse.ArgumentParser(add_help=False)
    run.add_argument("--model", default="bitnet-2b", help="weights file or 'bitnet-2b'")
    run.add_argument("--gating", choices=("on", "off"), default="off")
    run.add_argument("--lora", help="LoRA config (JSON) or a preset: " + ", ".join(PRESETS))
    run.add_argument("--lora-rank", type=int, default=16, help="rank used with a preset --lora")
    run.add_argument("--format", choices=("json", "csv"), default="json")

    p = argparse.ArgumentParser(prog="ternrom", description="Ternary ROM compiler and accelerator simulator")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("make-toy", parents=[common], help="write a seeded random ternary model")
    t.add_argument("--layers", type=int, default=4)
    t.add_argument("--hidden", type=int, default=256)
    t.add_argument("--ffn", type=int, default=704)
    t.add_argument("--heads", type=int, default=4)
    t.add_argument("--kv-heads", type=int, default=None)
    t.add_argument("--vocab", type=int, default=256)
    t.add_argument("--zero-ratio", type=float, default=0.4)
    t.add_argument("--norm", choices=[k.value for k in NormKind], default="layernorm")
    t.add_argument("--activation", choices=[k.value for k in ActivationKind], default="gelu")
    t.add_argument("--gated", action="store_true")
    t.set_defaults(func=cmd_make_toy)

    s = sub.add_parser("synthesize", parents=[common], help="compile every ROM bank of a model")
    s.add_argument("--model", required=True)
    s.add_argument("--no-cse", action="store_true", help="skip common-subexpression extraction")
    s.add_argument("--max-banks", type=int, default=None)
    s.set_defaults(func=cmd_synthesize)

    m = sub.add_parser("simulate", parents=[common, run], help="run token-by-token generation")
    m.add_argument("--prompt", help="comma-separated prompt token ids")
    m.add_argument("--prompt-len", type=int, default=8, help="seeded random prompt length (no --prompt)")
    m.add_argument("--generate", type=int, default=8)
    m.set_defaults(func=cmd_simulate)

    r = sub.add_parser("report", parents=[common, run], help="timing/power/area report for a model shape")
    r.add_argument("--context", type=int, default=None, help="decode context (default: max_context)")
    r.set_defaults(func=cmd_report)

    w = sub.add_parser("sweep", parents=[common, run], help="density, bank-height, LoRA or context sweeps")
    w.add_argument("kind", choices=("density", "bank-height", "lora", "context"))
    w.add_argument("--height", type=int, default=1024)
    w.add_argument("--width", type=int, default=128)
    w.add_argument("--start", type=float, default=0.5)
    w.add_argument("--stop", type=float, default=0.95)
    w.add_argument("--step", type=float, default=0.05)
    w.add_argument("--heights", default="256,512,1024,2048,4096")
    w.add_argument("--zero-bit-ratio", type=float, default=0.70)
    w.add_argument("--presets", default=",".join(LORA_SWEEP))
    w.add_argument("--contexts", default="1024,1536,2048,2560")
    w.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CapacityError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CAPACITY
    except FormatError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FORMAT
    except InvariantError as e:
        print(f"internal error: {e}", file=sys.stderr)
        return EXIT_INVARIANT
    except (FileNotFoundError, IsADirectoryError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (DomainError, TernromError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
