"""Command-line surface: one binary, one subcommand per pipeline stage.

Exit codes: 0 success, 1 validation error (bad flags or malformed inputs),
2 runtime error. Every flag default can be overridden through an environment
variable named SEQSEG_<FLAG> (dashes as underscores, upper-cased); outputs
are written atomically (temp file + rename).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import classifiers, crf, harness, lspi, policies, synthgen
from .combiner import combine_sequence
from .dataio import (
    DataFormatError,
    atomic_write_text,
    load_dataset,
    read_pgm,
    write_pgm,
)
from .mdp import ActionCatalog, presence_frequencies
from .metrics import reward
from .scene import BinaryMask, LabelMap, mask_for_class

ENV_PREFIX = "SEQSEG_"


class CliError(ValueError):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message):  # exit 1, not argparse's default 2
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _parse_res(text: str) -> tuple[int, int]:
    try:
        w, h = text.lower().split("x")
        return int(h), int(w)
    except Exception:
        raise CliError(f"resolution must look like 64x48, got {text!r}") from None


def _parse_grid(text: str) -> list[crf.CrfWeights]:
    """Grid spec: semicolon-separated w1,w2,w3 triples."""
    out = []
    for chunk in text.split(";"):
        parts = [float(v) for v in chunk.split(",")]
        if len(parts) != 3:
            raise CliError(f"grid point {chunk!r} must be w1,w2,w3")
        out.append(crf.CrfWeights(*parts))
    return out


def _class_id(dataset, name: str) -> int:
    try:
        return dataset.catalog.id_of(name)
    except KeyError as e:
        raise CliError(str(e)) from None


def _mask_path(out_dir: Path, scene_id: str, class_name: str) -> Path:
    return out_dir / f"{scene_id}__{class_name}.pgm"


# --------------------------------------------------------------------------
# subcommand handlers
# --------------------------------------------------------------------------


def cmd_synth_gen(args) -> int:
    templates = (
        synthgen.load_templates(args.templates) if args.templates else synthgen.default_templates(args.sigma)
    )
    if args.templates is None and args.sigma is not None:
        templates = synthgen.default_templates(args.sigma)
    dataset = synthgen.generate_corpus(
        templates,
        per_category=args.per_category,
        resolution=_parse_res(args.res),
        seed=args.seed,
        out_dir=args.out,
        train_frac=args.train_frac,
        sp_cell=args.sp_cell,
    )
    print(f"wrote {len(dataset.scenes)} scenes across {len(templates)} categories to {args.out}")
    return 0


def cmd_synth_templates(args) -> int:
    synthgen.save_templates(synthgen.default_templates(args.sigma), args.out)
    print(f"wrote default templates to {args.out}")
    return 0


def cmd_classifier_train(args) -> int:
    dataset = load_dataset(args.dataset)
    class_id = _class_id(dataset, getattr(args, "class"))
    if args.kind == "unary":
        model = classifiers.train_unary(
            dataset, class_id, rounds=args.rounds, seed=args.seed, calibrate=args.calibrate
        )
    else:
        model = classifiers.train_presence(
            dataset,
            class_id,
            rounds=args.rounds,
            undersample_ratio=args.undersample_ratio,
            seed=args.seed,
        )
    atomic_write_text(args.out, json.dumps(model.to_dict(), indent=2) + "\n")
    print(f"wrote {args.kind} model for {getattr(args, 'class')!r} to {args.out}")
    return 0


def cmd_crf_fit(args) -> int:
    dataset = load_dataset(args.dataset)
    grid = _parse_grid(args.grid) if args.grid else None
    if args.all:
        config = harness.resolve_config(
            {"seed": args.seed, "unary_rounds": args.rounds,
             "weight_grid": [[w.w1, w.w2, w.w3] for w in grid] if grid else None}
        )
        models = harness.train_models(dataset, config)
        atomic_write_text(args.out, json.dumps(harness.models_to_dict(models, dataset.catalog)) + "\n")
        print(f"wrote model bundle ({len(models.unaries)} classes) to {args.out}")
        return 0
    class_id = _class_id(dataset, getattr(args, "class"))
    if args.unary:
        unary = classifiers.StumpBoost.from_dict(json.loads(Path(args.unary).read_text()))
    else:
        unary = classifiers.train_unary(dataset, class_id, rounds=args.rounds, seed=args.seed)
    weights = crf.fit_weights(dataset.split_scenes("train"), class_id, unary, grid=grid)
    payload = {"class": getattr(args, "class"), "unary": unary.to_dict(), "weights": weights.to_dict()}
    atomic_write_text(args.out, json.dumps(payload, indent=2) + "\n")
    print(f"fitted weights {weights.to_dict()} for {getattr(args, 'class')!r}")
    return 0


def cmd_crf_infer(args) -> int:
    dataset = load_dataset(args.dataset)
    models = harness.models_from_dict(json.loads(Path(args.models).read_text()), dataset.catalog)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    scenes = dataset.split_scenes(args.split) if args.split else list(dataset.scenes)
    class_ids = sorted(models.unaries)
    if getattr(args, "class"):
        class_ids = [_class_id(dataset, getattr(args, "class"))]
    count = 0
    for scene in scenes:
        for class_id in class_ids:
            graph = crf.build_graph(scene, class_id, models.unaries[class_id])
            labeling = crf.map_inference(graph, models.crf_weights[class_id])
            mask = crf.mask_from_labeling(scene, labeling)
            write_pgm(
                _mask_path(out_dir, scene.scene_id, dataset.catalog.name_of(class_id)),
                mask.bits.astype(np.uint16) * 65535,
            )
            count += 1
    print(f"wrote {count} MAP masks to {out_dir}")
    return 0


def _read_mask(path: Path) -> BinaryMask:
    return BinaryMask(read_pgm(path) > 0)


def cmd_combine(args) -> int:
    dataset = load_dataset(args.dataset)
    catalog = dataset.catalog
    masks_dir = Path(args.masks_dir)
    order_names = [n for n in args.order.split(",") if n]
    order = [_class_id(dataset, n) for n in order_names]
    object_masks = {cid: _read_mask(_mask_path(masks_dir, args.scene, catalog.name_of(cid))) for cid in order}
    background_masks = {
        cid: _read_mask(_mask_path(masks_dir, args.scene, catalog.name_of(cid)))
        for cid in catalog.background_ids
    }
    canvas = combine_sequence(object_masks, background_masks, order, catalog)
    write_pgm(args.out, canvas.assignment)
    print(f"wrote combined canvas to {args.out}")
    return 0


def cmd_metrics_fwji(args) -> int:
    dataset = load_dataset(args.dataset)
    catalog = dataset.catalog
    canvas_grid = read_pgm(args.canvas)
    gt = LabelMap(read_pgm(args.gt))
    taken = [_class_id(dataset, n) for n in args.taken.split(",") if n]
    from .combiner import LabelCanvas

    canvas = LabelCanvas(
        assignment=canvas_grid.astype(np.uint16),
        provenance=np.where(canvas_grid > 0, 0, -1).astype(np.int32),
        segments=[],
    )
    breakdown = reward(canvas, gt, taken, catalog)
    print("class,weight,jaccard")
    for class_id, w, ji in breakdown.per_class:
        print(f"{catalog.name_of(class_id)},{repr(w)},{repr(ji)}")
    print(f"background,,{repr(breakdown.r_bg)}")
    print(f"total,,{repr(breakdown.total)}")
    return 0


def _lspi_config_from_args(args, seed: int) -> lspi.LspiConfig:
    return lspi.LspiConfig(
        gamma=args.gamma,
        iterations=args.iterations,
        eps_base=args.eps0,
        eps_floor=args.eps_floor,
        test_epsilon=args.eps_test,
        ridge=args.ridge,
        seed=seed,
        reuse_samples=args.reuse_samples,
    )


def cmd_policy_train(args) -> int:
    dataset = load_dataset(args.dataset)
    catalog = dataset.catalog
    models = harness.models_from_dict(json.loads(Path(args.models).read_text()), catalog)
    config = harness.resolve_config({"seed": args.seed, "n_actions": args.actions})
    pool = [s for s in dataset.split_scenes("test") if s.category == args.category]
    if not pool:
        raise CliError(f"category {args.category!r} has no policy-pool scenes")
    order = policies.fixed_order(pool, catalog, args.actions)
    actions = ActionCatalog.for_catalog(order, catalog)
    beliefs0 = presence_frequencies(pool, actions.belief_ids)
    envs = []
    for scene in pool:
        assets = harness.infer_scene_assets(scene, models, config)
        envs.append(harness.build_environment(scene, catalog, actions, assets, models, beliefs0, config))
    weights, history = lspi.train(envs, _lspi_config_from_args(args, args.seed))
    lspi.save_policy(args.out, weights, actions.class_ids, [catalog.name_of(c) for c in actions.class_ids],
                     actions.belief_ids, args.gamma)
    diag_path = Path(args.out).with_suffix(".diagnostics.csv")
    lines = ["iteration,epsilon,mean_reward"] + [
        f"{d.iteration},{repr(d.epsilon)},{repr(d.mean_reward)}" for d in history
    ]
    atomic_write_text(diag_path, "\n".join(lines) + "\n")
    print(f"wrote policy to {args.out} (diagnostics: {diag_path})")
    return 0


def cmd_policy_eval(args) -> int:
    dataset = load_dataset(args.dataset)
    out_path = Path(args.out)
    config = {
        "seed": args.seed,
        "policies": [p for p in args.policies.split(",") if p],
        "n_actions": args.actions,
        "policy_seeds": args.policy_seeds,
        "jobs": args.jobs,
        "deterministic": args.deterministic,
    }
    if args.categories:
        config["categories"] = args.categories.split(",")
    result = harness.run_experiment(dataset, config, out_path.parent if out_path.parent != Path() else Path("."))
    produced = Path(result["out_dir"]) / "curves.csv"
    if produced != out_path:
        os.replace(produced, out_path)
    print(f"wrote {len(result['rows'])} curve rows to {out_path}")
    return 0


def cmd_policy_dump(args) -> int:
    weights, meta = lspi.load_policy(args.policy)
    if args.reshape:
        n_actions = len(meta["class_ids"])
        block = 1 + 2 * meta["K"]
        grid = weights.reshape(n_actions, block)
        lines = [",".join(repr(v) for v in row) for row in grid]
        text = "\n".join(lines) + "\n"
    else:
        text = "\n".join(repr(v) for v in weights) + "\n"
    if args.out:
        atomic_write_text(args.out, text)
        print(f"wrote weights to {args.out}")
    else:
        sys.stdout.write(text)
    return 0


def cmd_experiment_run(args) -> int:
    dataset = load_dataset(args.dataset)
    config = json.loads(Path(args.config).read_text()) if args.config else {}
    if args.seed is not None:
        config["seed"] = args.seed
    if args.jobs is not None:
        config["jobs"] = args.jobs
    if args.deterministic:
        config["deterministic"] = True
    result = harness.run_experiment(dataset, config, args.out)
    print(f"experiment complete: {len(result['rows'])} rows -> {args.out}/curves.csv")
    return 0


# --------------------------------------------------------------------------
# parser assembly
# --------------------------------------------------------------------------


def build_parser() -> Parser:
    parser = Parser(prog="seqseg", description=__doc__)
    parser.add_argument("--dump-flags", action="store_true", help="print the flag schema as JSON and exit")
    sub = parser.add_subparsers(dest="command", parser_class=Parser)

    synth = sub.add_parser("synth", help="synthetic corpus generation").add_subparsers(
        dest="subcommand", parser_class=Parser
    )
    gen = synth.add_parser("gen", help="generate a corpus")
    gen.add_argument("--templates", default=None, help="template JSON (default: built-in nine categories)")
    gen.add_argument("--per-category", type=int, required=True)
    gen.add_argument("--res", default="64x64", help="WxH")
    gen.add_argument("--seed", type=int, required=True)
    gen.add_argument("--out", required=True)
    gen.add_argument("--sigma", type=float, default=synthgen.DEFAULT_NOISE_SIGMA, help="feature noise")
    gen.add_argument("--train-frac", type=float, default=0.4)
    gen.add_argument("--sp-cell", type=int, default=8, help="base superpixel cell size")
    gen.set_defaults(func=cmd_synth_gen)
    tpl = synth.add_parser("templates", help="dump the built-in templates")
    tpl.add_argument("--out", required=True)
    tpl.add_argument("--sigma", type=float, default=synthgen.DEFAULT_NOISE_SIGMA)
    tpl.set_defaults(func=cmd_synth_templates)

    clf = sub.add_parser("classifier", help="boosted classifiers").add_subparsers(
        dest="subcommand", parser_class=Parser
    )
    ctrain = clf.add_parser("train", help="train one classifier")
    ctrain.add_argument("--dataset", required=True, help="manifest path")
    ctrain.add_argument("--class", required=True)
    ctrain.add_argument("--kind", choices=["unary", "presence"], default="unary")
    ctrain.add_argument("--rounds", type=int, default=64)
    ctrain.add_argument("--undersample-ratio", type=float, default=1.0)
    ctrain.add_argument("--calibrate", action="store_true")
    ctrain.add_argument("--seed", type=int, required=True)
    ctrain.add_argument("--out", required=True)
    ctrain.set_defaults(func=cmd_classifier_train)

    crf_sub = sub.add_parser("crf", help="binary CRF fit/inference").add_subparsers(
        dest="subcommand", parser_class=Parser
    )
    cfit = crf_sub.add_parser("fit", help="grid-search pairwise weights")
    cfit.add_argument("--dataset", required=True)
    cfit.add_argument("--class", default=None)
    cfit.add_argument("--all", action="store_true", help="train the full model bundle")
    cfit.add_argument("--unary", default=None, help="pre-trained unary model JSON")
    cfit.add_argument("--grid", default=None, help="semicolon-separated w1,w2,w3 triples")
    cfit.add_argument("--rounds", type=int, default=64)
    cfit.add_argument("--seed", type=int, required=True)
    cfit.add_argument("--out", required=True)
    cfit.set_defaults(func=cmd_crf_fit)
    cinfer = crf_sub.add_parser("infer", help="write MAP masks as 16-bit PGM")
    cinfer.add_argument("--dataset", required=True)
    cinfer.add_argument("--models", required=True, help="bundle from `crf fit --all`")
    cinfer.add_argument("--class", default=None, help="restrict to one class")
    cinfer.add_argument("--split", default=None, help="restrict to a named split")
    cinfer.add_argument("--out", required=True)
    cinfer.set_defaults(func=cmd_crf_infer)

    comb = sub.add_parser("combine", help="sequentially combine masks")
    comb.add_argument("--dataset", required=True)
    comb.add_argument("--masks-dir", required=True)
    comb.add_argument("--scene", required=True, help="scene id")
    comb.add_argument("--order", required=True, help="comma-separated object class names")
    comb.add_argument("--out", required=True)
    comb.set_defaults(func=cmd_combine)

    met = sub.add_parser("metrics", help="evaluation metrics").add_subparsers(
        dest="subcommand", parser_class=Parser
    )
    fwji = met.add_parser("fwji", help="frequency-weighted Jaccard breakdown")
    fwji.add_argument("--dataset", required=True)
    fwji.add_argument("--canvas", required=True)
    fwji.add_argument("--gt", required=True)
    fwji.add_argument("--taken", required=True, help="comma-separated class names")
    fwji.set_defaults(func=cmd_metrics_fwji)

    pol = sub.add_parser("policy", help="ordering policies").add_subparsers(
        dest="subcommand", parser_class=Parser
    )
    ptrain = pol.add_parser("train", help="learn an ordering policy with LSPI")
    ptrain.add_argument("--dataset", required=True)
    ptrain.add_argument("--models", required=True)
    ptrain.add_argument("--category", required=True)
    ptrain.add_argument("--actions", type=int, default=9)
    ptrain.add_argument("--gamma", type=float, default=0.9)
    ptrain.add_argument("--iterations", type=int, default=10)
    ptrain.add_argument("--eps0", type=float, default=0.7)
    ptrain.add_argument("--eps-floor", type=float, default=0.1)
    ptrain.add_argument("--eps-test", type=float, default=0.005)
    ptrain.add_argument("--ridge", type=float, default=1e-6)
    ptrain.add_argument("--reuse-samples", action="store_true")
    ptrain.add_argument("--seed", type=int, required=True)
    ptrain.add_argument("--out", required=True)
    ptrain.set_defaults(func=cmd_policy_train)
    peval = pol.add_parser("eval", help="cross-validated policy comparison")
    peval.add_argument("--dataset", required=True)
    peval.add_argument("--policies", default="lspi,fixed,random,oracle,optimal")
    peval.add_argument("--actions", type=int, default=9)
    peval.add_argument("--policy-seeds", type=int, default=5)
    peval.add_argument("--categories", default=None, help="comma-separated subset")
    peval.add_argument("--jobs", type=int, default=1)
    peval.add_argument("--deterministic", action="store_true")
    peval.add_argument("--seed", type=int, required=True)
    peval.add_argument("--out", required=True, help="curves.csv destination")
    peval.set_defaults(func=cmd_policy_eval)
    pdump = pol.add_parser("dump", help="dump policy weights")
    pdump.add_argument("--policy", required=True)
    pdump.add_argument("--reshape", action="store_true", help="|A| x (1+2K) grid")
    pdump.add_argument("--out", default=None)
    pdump.set_defaults(func=cmd_policy_dump)

    exp = sub.add_parser("experiment", help="full experiment runs").add_subparsers(
        dest="subcommand", parser_class=Parser
    )
    erun = exp.add_parser("run", help="run the cross-validated experiment")
    erun.add_argument("--dataset", required=True)
    erun.add_argument("--config", default=None, help="experiment config JSON")
    erun.add_argument("--seed", type=int, default=None, help="override the config seed")
    erun.add_argument("--jobs", type=int, default=None)
    erun.add_argument("--deterministic", action="store_true")
    erun.add_argument("--out", required=True)
    erun.set_defaults(func=cmd_experiment_run)

    return parser


def _apply_env_overrides(parser: argparse.ArgumentParser) -> None:
    """Let SEQSEG_<FLAG> env vars override flag defaults, recursively."""
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            for sub in action.choices.values():
                _apply_env_overrides(sub)
            continue
        if not action.option_strings or action.dest in ("help", "dump_flags"):
            continue
        env_name = ENV_PREFIX + action.dest.upper()
        if env_name in os.environ:
            raw = os.environ[env_name]
            if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
                action.default = raw.lower() in ("1", "true", "yes")
            elif action.type is not None:
                action.default = action.type(raw)
            else:
                action.default = raw
            action.required = False


def _flag_schema(parser: argparse.ArgumentParser, prog: str = "seqseg") -> list[dict]:
    rows = []
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            for name, sub in action.choices.items():
                rows.extend(_flag_schema(sub, f"{prog} {name}"))
            continue
        if not action.option_strings or action.dest == "help":
            continue
        rows.append(
            {
                "command": prog,
                "flag": action.option_strings[-1],
                "env": ENV_PREFIX + action.dest.upper(),
                "required": bool(action.required),
                "default": action.default,
                "help": action.help,
            }
        )
    return rows


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    _apply_env_overrides(parser)
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    if args.dump_flags:
        print(json.dumps(_flag_schema(parser), indent=2, default=str))
        return 0
    if not getattr(args, "func", None):
        parser.print_help()
        return 1
    try:
        return args.func(args)
    except (CliError, DataFormatError, ValueError, KeyError, FileNotFoundError) as e:
        print(f"seqseg: error: {e}", file=sys.stderr)
        return 1
    except Exception as e:  # noqa: BLE001 - runtime failures get a distinct code
        print(f"seqseg: runtime error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
