"""Command-line entry point.

Every subcommand is a reproducible pipeline stage: all randomness derives
from --seed, and each produced output gets a ``<out>.manifest.json`` sidecar
recording the configuration, package version, and input digests. Exit codes:
0 success, 1 domain error, 2 usage error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from pathlib import Path

from . import __version__, accel, arena, critic, evalharness, refine, segtree, toyworld
from . import planner as planner_mod
from .trajectory import RenderOptions, parse_trajectory, render_trajectory


def _sha256(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(out: str, args: argparse.Namespace, inputs: list[str]) -> None:
    config = {
        k: v for k, v in sorted(vars(args).items())
        if k not in ("func",) and not k.startswith("_") and isinstance(v, (str, int, float, bool, type(None)))
    }
    manifest = {
        "subcommand": args.subcommand,
        "config": config,
        "version": __version__,
        "inputs": {str(p): _sha256(p) for p in inputs},
        "output": str(out),
    }
    Path(f"{out}.manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _render_opts(args: argparse.Namespace) -> RenderOptions:
    return RenderOptions(
        include_interpretation=not getattr(args, "no_interpretation", False),
        include_states=not getattr(args, "no_states", False),
    )


def _load_scorer(model_path: str):
    model, embedder = critic.load_model(Path(model_path).read_text(encoding="utf-8"))
    return critic.make_text_scorer(model, embedder)


# ---------------------------------------------------------------- segment


def _cmd_segment(args: argparse.Namespace) -> int:
    with open(args.features, "rb") as fh:
        stream = segtree.load_feature_stream(fh)
    if args.pool > 1:
        stream = segtree.pool_frames(stream, args.pool)
    tree = segtree.build_tree(stream)
    Path(args.out).write_text(tree.to_json() + "\n", encoding="utf-8")
    _write_manifest(args.out, args, [args.features])
    print(f"wrote {args.out}: {len(tree)} nodes, backend={accel.backend_name()}")
    return 0


def _cmd_tree_render(args: argparse.Namespace) -> int:
    tree = segtree.CaptionTree.from_json(Path(args.tree).read_text(encoding="utf-8"))
    Path(args.out).write_text(segtree.dfs_render(tree), encoding="utf-8")
    _write_manifest(args.out, args, [args.tree])
    return 0


def _cmd_tree_windows(args: argparse.Namespace) -> int:
    tree = segtree.CaptionTree.from_json(Path(args.tree).read_text(encoding="utf-8"))
    ids = segtree.filter_captionable(tree, args.min_duration)[: args.k]
    payload = {
        "k": args.k,
        "min_duration": args.min_duration,
        "windows": [
            {"id": i, "start": tree.node(i).start, "end": tree.node(i).end} for i in ids
        ],
    }
    Path(args.out).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    _write_manifest(args.out, args, [args.tree])
    return 0


# ----------------------------------------------------------------- refine


def _cmd_refine(args: argparse.Namespace) -> int:
    tree = segtree.CaptionTree.from_json(Path(args.tree).read_text(encoding="utf-8"))
    tree_text = segtree.dfs_render(tree)
    extra = Path(args.extra_info).read_text(encoding="utf-8") if args.extra_info else ""
    if args.fixture:
        client = refine.MockTextGenClient.from_fixture(
            Path(args.fixture).read_text(encoding="utf-8"))
    else:
        client = refine.HttpTextGenClient.from_env()
    result = refine.self_refine(client, tree_text, extra, args.iterations,
                                args.min_start, args.max_end)
    extraction = result.extraction
    payload = {
        "discussion": extraction.discussion,
        "goal": extraction.goal,
        "interpretation": extraction.interpretation,
        "plan": [
            {"action": s.action, "state": s.state, "start": s.start, "end": s.end}
            for s in extraction.plan
        ],
    }
    Path(args.out).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    audit = [
        {"kind": r.kind, "prompt_hash": r.prompt_hash, "response": r.response,
         "parsed": r.parsed is not None, "error": r.error}
        for r in result.rounds
    ]
    Path(f"{args.out}.audit.json").write_text(
        json.dumps(audit, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    inputs = [args.tree] + ([args.extra_info] if args.extra_info else []) \
        + ([args.fixture] if args.fixture else [])
    _write_manifest(args.out, args, inputs)
    return 0


# ----------------------------------------------------------------- critic


def _read_trajectories(path: str) -> list:
    p = Path(path)
    if p.is_dir():
        return [parse_trajectory(f.read_text(encoding="utf-8")) for f in sorted(p.glob("*.txt"))]
    trajs = []
    for ln in p.read_text(encoding="utf-8").splitlines():
        if ln.strip():
            trajs.append(parse_trajectory(json.loads(ln)["markup"]))
    return trajs


def _cmd_pairs_build(args: argparse.Namespace) -> int:
    trajs = _read_trajectories(args.trajs)
    cfg = critic.PairConfig(seed=args.seed, min_base=args.min_base,
                            good_steps=args.good_steps,
                            distractor_steps=args.distractor_steps,
                            render=_render_opts(args))
    pairs = critic.build_pairs(trajs, cfg)
    Path(args.out).write_text(critic.dump_pairs(pairs), encoding="utf-8")
    _write_manifest(args.out, args, [args.trajs] if Path(args.trajs).is_file() else [])
    print(f"wrote {len(pairs)} pairs to {args.out}")
    return 0


def _cmd_critic_train(args: argparse.Namespace) -> int:
    pairs = critic.load_pairs(Path(args.pairs).read_text(encoding="utf-8"))
    if args.external:
        pairs += critic.load_external_pairs(Path(args.external).read_text(encoding="utf-8"))
    embedder = critic.MockHashEmbedder(dim=args.dim)
    model = critic.init_model(dim=args.dim, hidden=args.hidden, seed=args.seed)
    cfg = critic.CriticTrainConfig(margin=args.margin, lam=getattr(args, "lambda"),
                                   batch_size=args.batch_size, epochs=args.epochs,
                                   lr=args.lr, seed=args.seed)
    trained, history = critic.train(model, embedder, pairs, cfg)
    Path(args.out).write_text(critic.save_model(trained, embedder) + "\n", encoding="utf-8")
    inputs = [args.pairs] + ([args.external] if args.external else [])
    _write_manifest(args.out, args, inputs)
    print(f"trained on {len(pairs)} pairs over {len(history)} batches; "
          f"first loss {history[0]:.4f}, last loss {history[-1]:.4f}")
    return 0


def _cmd_critic_score(args: argparse.Namespace) -> int:
    scorer = _load_scorer(args.model)
    traj = parse_trajectory(Path(args.traj).read_text(encoding="utf-8"))
    opts = _render_opts(args)
    from .trajectory import render_critic_text

    goal_text, traj_text = render_critic_text(traj, len(traj.steps), opts)
    if args.goal is not None:
        goal_text = args.goal
    cost = scorer(goal_text, traj_text)
    print(f"{cost:.6f}")
    if args.out:
        Path(args.out).write_text(json.dumps({"cost": cost}) + "\n", encoding="utf-8")
        _write_manifest(args.out, args, [args.model, args.traj])
    return 0


# ---------------------------------------------------------------- planner


def _cmd_plan_sys1(args: argparse.Namespace) -> int:
    world = toyworld.load_world(Path(args.world).read_text(encoding="utf-8"))
    wm = toyworld.ToyWorldModel(world)
    traj = planner_mod.system1_rollout(wm, world.describe_goal(), "", args.max_steps)
    Path(args.out).write_text(render_trajectory(traj), encoding="utf-8")
    _write_manifest(args.out, args, [args.world])
    print(f"{len(traj.steps)} steps, achieved={traj.achieved}")
    return 0


def _cmd_plan_sys2(args: argparse.Namespace) -> int:
    world = toyworld.load_world(Path(args.world).read_text(encoding="utf-8"))
    wm = toyworld.ToyWorldModel(world)
    if args.model:
        model, embedder = critic.load_model(Path(args.model).read_text(encoding="utf-8"))
        scorer = critic.make_plan_scorer(model, embedder)
    else:
        scorer = toyworld.exact_cost_scorer(world)
    cfg = planner_mod.SearchConfig(
        num_candidates=args.candidates,
        beam_width=args.beam,
        max_depth=args.max_depth,
        mode=planner_mod.SearchMode.BEAM_PARTIAL if args.mode == "beam"
        else planner_mod.SearchMode.FULL_ROLLOUTS,
        objective=planner_mod.Objective.MAXIMIZE if args.objective == "max"
        else planner_mod.Objective.MINIMIZE,
        seed=args.seed,
    )
    ranked = planner_mod.system2_plan(wm, scorer, world.describe_goal(), "", cfg)
    Path(args.out).write_text(render_trajectory(ranked.chosen_plan), encoding="utf-8")
    out = Path(args.out)
    candidates = []
    for i, (traj, cost) in enumerate(ranked.plans):
        ref = f"{out.stem}.cand{i:03d}.txt"
        (out.parent / ref).write_text(render_trajectory(traj), encoding="utf-8")
        candidates.append({"cost": cost, "plan_ref": ref})
    ranking = {"candidates": candidates, "chosen": ranked.chosen}
    Path(f"{args.out}.ranking.json").write_text(
        json.dumps(ranking, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    _write_manifest(args.out, args, [args.world] + ([args.model] if args.model else []))
    print(f"chosen cost {ranked.chosen_cost:.4f}, achieved={ranked.chosen_plan.achieved}")
    return 0


# ------------------------------------------------------------------- eval


def _cmd_eval_gad(args: argparse.Namespace) -> int:
    cases = evalharness.load_gad_cases(Path(args.cases).read_text(encoding="utf-8"))
    scorer = _load_scorer(args.model)
    report = evalharness.eval_gad(scorer, cases, _render_opts(args))
    payload = {
        "accuracy": report.accuracy,
        "chance_accuracy": evalharness.chance_accuracy(cases),
        "cases": [
            {"case_id": c.case_id, "n_gold": c.n_gold, "n_total": c.n_total,
             "argmin_k": c.argmin_k, "hit": c.hit, "costs": list(c.costs)}
            for c in report.cases
        ],
    }
    Path(args.out).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    _write_manifest(args.out, args, [args.cases, args.model])
    print(f"GAD accuracy {report.accuracy:.4f} (chance {payload['chance_accuracy']:.4f})")
    return 0


def _report_from_json(payload: dict) -> evalharness.GadReport:
    cases = tuple(
        evalharness.GadCaseResult(case_id=c["case_id"], n_gold=c["n_gold"],
                                  n_total=c["n_total"], argmin_k=c["argmin_k"],
                                  hit=c["hit"], costs=tuple(c["costs"]))
        for c in payload["cases"]
    )
    return evalharness.GadReport(accuracy=payload["accuracy"], cases=cases)


def _cmd_curves_export(args: argparse.Namespace) -> int:
    payload = json.loads(Path(args.report).read_text(encoding="utf-8"))
    report = _report_from_json(payload)
    evalharness.export_cost_curves(report, args.out)
    _write_manifest(args.out, args, [args.report])
    return 0


def _cmd_eval_vpa(args: argparse.Namespace) -> int:
    preds = evalharness.load_vpa_predictions(Path(args.preds).read_text(encoding="utf-8"))
    if args.horizon and any(len(p.gold) != args.horizon for p in preds):
        raise evalharness.LengthMismatch(f"predictions do not all have horizon {args.horizon}")
    metrics = evalharness.vpa_metrics(preds)
    line = json.dumps(metrics, sort_keys=True)
    print(line)
    if args.out:
        Path(args.out).write_text(line + "\n", encoding="utf-8")
        _write_manifest(args.out, args, [args.preds])
    return 0


def _cmd_eval_wp(args: argparse.Namespace) -> int:
    items = evalharness.load_wp_items(Path(args.items).read_text(encoding="utf-8"))
    accuracy = evalharness.eval_wp(_load_scorer(args.model), items)
    print(f"{accuracy:.4f}")
    if args.out:
        Path(args.out).write_text(json.dumps({"accuracy": accuracy}) + "\n", encoding="utf-8")
        _write_manifest(args.out, args, [args.items, args.model])
    return 0


# ------------------------------------------------------------------ arena


def _infer_arena_config(inventory: dict, args: argparse.Namespace) -> arena.ArenaConfig:
    models = args.models.split(",") if args.models else sorted(
        {m for (_, _, m) in inventory if m})
    datasets = args.datasets.split(",") if args.datasets else sorted(
        {d for (d, _, _) in inventory})
    return arena.ArenaConfig(models=tuple(models), datasets=tuple(datasets), seed=args.seed)


def _cmd_arena_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .arena_http import create_app

    data_dir = args.data or os.environ.get("WM_ARENA_DATA", "")
    log_path = args.log or os.environ.get("WM_ARENA_LOG", "")
    if not data_dir:
        raise arena.ArenaError("no inventory directory (--data or WM_ARENA_DATA)")
    if not log_path:
        raise arena.ArenaError("no log path (--log or WM_ARENA_LOG)")
    seed_env = os.environ.get("WM_ARENA_SEED")
    if args.seed == 0 and seed_env:
        args.seed = int(seed_env)
    inventory = arena.load_inventory(data_dir)
    cfg = _infer_arena_config(inventory, args)
    state = arena.ArenaState(cfg, inventory, log_path=log_path)
    if Path(log_path).exists():
        state.replay(arena.load_log(log_path))
    app = create_app(state, ui_dir=args.ui or None)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def _cmd_arena_report(args: argparse.Namespace) -> int:
    records = arena.load_log(args.log)
    if not records:
        raise arena.ArenaError("battle log is empty")
    models = sorted({r.model_a for r in records} | {r.model_b for r in records})
    datasets = sorted({r.dataset for r in records})
    cfg = arena.ArenaConfig(models=tuple(models), datasets=tuple(datasets),
                            initial_rating=args.initial, k_factor=args.k)
    state = arena.ArenaState(cfg, inventory={})
    state.replay(records)
    rows = state.leaderboard()
    agreement = state.agreement_rows()
    payload: dict = {"leaderboard": rows, "battles": len(records)}
    if agreement:
        try:
            payload["fleiss_kappa"] = arena.fleiss_kappa(agreement)
        except arena.DegenerateMarginals:
            payload["fleiss_kappa"] = None
        payload["raw_agreement_pct"] = arena.raw_agreement(agreement)
    header = ["model", "elo", "battles"] + [f"win%:{d}" for d in datasets]
    print("\t".join(header))
    for row in rows:
        cells = [row["model"], str(row["elo"]), str(row["battles"])]
        for d in datasets:
            wr = row["win_rates"][d]
            cells.append("—" if wr is None else f"{wr:.1f}")
        print("\t".join(cells))
    if "fleiss_kappa" in payload:
        print(f"fleiss_kappa={payload['fleiss_kappa']}, "
              f"raw_agreement={payload['raw_agreement_pct']:.2f}%")
    if args.out:
        Path(args.out).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n",
                                  encoding="utf-8")
        _write_manifest(args.out, args, [args.log])
    return 0


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wmplan", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def add(name: str, func, **kwargs) -> argparse.ArgumentParser:
        p = sub.add_parser(name, **kwargs)
        p.set_defaults(func=func)
        return p

    p = add("segment", _cmd_segment, help="build a caption tree from a feature stream")
    p.add_argument("--features", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--pool", type=int, default=0, help="mean-pool frames into windows (off)")
    p.add_argument("--seed", type=int, default=0)

    p = add("tree-render", _cmd_tree_render, help="render a caption tree as markdown")
    p.add_argument("--tree", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)

    p = add("tree-windows", _cmd_tree_windows, help="pick caption windows in BFS order")
    p.add_argument("--tree", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--min-duration", type=float, default=5.0)
    p.add_argument("--seed", type=int, default=0)

    p = add("refine", _cmd_refine, help="extract a plan from a caption tree")
    p.add_argument("--tree", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--extra-info", default="")
    p.add_argument("--fixture", default="", help="mock client fixture (JSON hash->response)")
    p.add_argument("--iterations", type=int, default=2)
    p.add_argument("--min-start", type=float, default=None)
    p.add_argument("--max-end", type=float, default=None)
    p.add_argument("--seed", type=int, default=0)

    p = add("pairs-build", _cmd_pairs_build, help="construct critic training pairs")
    p.add_argument("--trajs", required=True, help="dir of *.txt markup or a JSONL of {markup}")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--min-base", type=int, default=1)
    p.add_argument("--good-steps", type=int, default=1)
    p.add_argument("--distractor-steps", type=int, default=1)
    p.add_argument("--no-interpretation", action="store_true")
    p.add_argument("--no-states", action="store_true")

    p = add("critic-train", _cmd_critic_train, help="train the cost scorer")
    p.add_argument("--pairs", required=True)
    p.add_argument("--external", default="", help="extra external pairs JSONL")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dim", type=int, default=256)
    p.add_argument("--hidden", type=int, default=32)
    p.add_argument("--margin", type=float, default=1.0)
    p.add_argument("--lambda", type=float, default=0.01, dest="lambda")
    p.add_argument("--batch-size", type=int, default=128)
    p.add_argument("--epochs", type=int, default=1)
    p.add_argument("--lr", type=float, default=1e-3)

    p = add("critic-score", _cmd_critic_score, help="score a trajectory under a goal")
    p.add_argument("--model", required=True)
    p.add_argument("--traj", required=True, help="trajectory markup file")
    p.add_argument("--goal", default=None, help="override goal text")
    p.add_argument("--out", default="")
    p.add_argument("--no-interpretation", action="store_true")
    p.add_argument("--no-states", action="store_true")
    p.add_argument("--seed", type=int, default=0)

    p = add("plan-sys1", _cmd_plan_sys1, help="greedy reactive rollout")
    p.add_argument("--world", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--max-steps", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)

    p = add("plan-sys2", _cmd_plan_sys2, help="cost-minimizing plan search")
    p.add_argument("--world", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--model", default="", help="critic model (defaults to the exact oracle)")
    p.add_argument("--mode", choices=["rollouts", "beam"], default="rollouts")
    p.add_argument("--candidates", type=int, default=20)
    p.add_argument("--beam", type=int, default=5)
    p.add_argument("--max-depth", type=int, default=10)
    p.add_argument("--objective", choices=["min", "max"], default="min")
    p.add_argument("--seed", type=int, default=0)

    p = add("eval-gad", _cmd_eval_gad, help="goal-achievement detection evaluation")
    p.add_argument("--cases", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--no-interpretation", action="store_true")
    p.add_argument("--no-states", action="store_true")
    p.add_argument("--seed", type=int, default=0)

    p = add("eval-vpa", _cmd_eval_vpa, help="plan-horizon metrics (SR/mAcc/mIoU)")
    p.add_argument("--preds", required=True)
    p.add_argument("--horizon", type=int, default=0)
    p.add_argument("--out", default="")
    p.add_argument("--seed", type=int, default=0)

    p = add("eval-wp", _cmd_eval_wp, help="4-way min-cost plan selection")
    p.add_argument("--items", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", default="")
    p.add_argument("--seed", type=int, default=0)

    p = add("curves-export", _cmd_curves_export, help="export GAD cost curves as CSV")
    p.add_argument("--report", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)

    p = add("arena-serve", _cmd_arena_serve, help="run the preference arena backend")
    p.add_argument("--data", default="", help="plan inventory dir (or WM_ARENA_DATA)")
    p.add_argument("--log", default="", help="battle log path (or WM_ARENA_LOG)")
    p.add_argument("--models", default="", help="comma-separated (default: infer)")
    p.add_argument("--datasets", default="", help="comma-separated (default: infer)")
    p.add_argument("--ui", default="", help="static frontend dir to mount at /")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8321)
    p.add_argument("--seed", type=int, default=0)

    p = add("arena-report", _cmd_arena_report, help="leaderboard and agreement from a log")
    p.add_argument("--log", required=True)
    p.add_argument("--out", default="")
    p.add_argument("--k", type=float, default=32.0)
    p.add_argument("--initial", type=float, default=1000.0)
    p.add_argument("--seed", type=int, default=0)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    try:
        return args.func(args)
    except (ValueError, OSError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
