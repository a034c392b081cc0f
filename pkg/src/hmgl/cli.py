"""Command-line interface: synth, train, match, eval, ablate, gradcheck."""

from __future__ import annotations

import argparse
import csv
import dataclasses
import sys

from .ablation import SUITES, ablate, retrieval_metrics, split_views
from .domain import Config
from .matching import match_all
from .mgnn import gradient_check
from .storage import load_dataset, read_checkpoint, write_checkpoint, write_dataset
from .synth import SynthSpec, generate
from .trainer import label_mapping, resolve_config, init_params, train


def _add_synth(sub) -> None:
    p = sub.add_parser("synth", help="generate a seeded synthetic dataset")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--groups", type=int, required=True, help="number of group identities")
    p.add_argument("--views", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise", type=float, default=0.45, help="embedding noise scale")
    p.add_argument("--occlusion-rate", type=float, default=0.5)
    p.add_argument("--dim", type=int, default=32, help="embedding dimension")
    p.add_argument("--members-min", type=int, default=2)
    p.add_argument("--members-max", type=int, default=6)


def _add_train(sub) -> None:
    p = sub.add_parser("train", help="train a model, write a checkpoint")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--lr", type=float, default=0.0003)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--batch", type=int, default=16)
    p.add_argument("--delta", type=float, default=0.2)
    p.add_argument("--layers", type=int, default=2)
    p.add_argument("--margin", type=float, default=0.3)
    p.add_argument("--momentum", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--checkpoint-every", type=int, default=0,
                   help="also write the checkpoint every K epochs")


def _add_match(sub) -> None:
    p = sub.add_parser("match", help="rank gallery groups for each query")
    p.add_argument("--data", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--query-view", type=int, required=True)
    p.add_argument("--gallery-view", type=int, required=True)
    p.add_argument("--alpha", type=float, default=0.6)
    p.add_argument("--beta", type=float, default=0.3)
    p.add_argument("--gamma", type=float, default=0.1)
    p.add_argument("--clusters", default="3", help="subgraph count, an integer or 'auto'")
    p.add_argument("--tau", type=float, default=0.0)
    p.add_argument("--threads", type=int, default=1)


def _add_eval(sub) -> None:
    p = sub.add_parser("eval", help="score a match CSV with CMC and mAP")
    p.add_argument("--rankings", required=True, help="CSV produced by the match command")
    p.add_argument("--data", required=True)
    p.add_argument("--threads", type=int, default=1, help="accepted for interface symmetry")


def _add_ablate(sub) -> None:
    p = sub.add_parser("ablate", help="toggle suites over graphs, losses or scales")
    p.add_argument("--data", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--suite", required=True, choices=SUITES)
    p.add_argument("--query-view", type=int, default=0)
    p.add_argument("--gallery-view", type=int, default=1)
    p.add_argument("--threads", type=int, default=1)


def _add_gradcheck(sub) -> None:
    p = sub.add_parser("gradcheck", help="verify analytic gradients against finite differences")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dim", type=int, default=6)
    p.add_argument("--layers", type=int, default=2)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hmgl", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    _add_synth(sub)
    _add_train(sub)
    _add_match(sub)
    _add_eval(sub)
    _add_ablate(sub)
    _add_gradcheck(sub)
    return parser


def _parse_clusters(value: str) -> tuple[int, str]:
    if value == "auto":
        return 3, "auto"
    return int(value), "fixed"


def _cmd_synth(args) -> int:
    spec = SynthSpec(
        num_group_ids=args.groups,
        members_range=(args.members_min, args.members_max),
        d=args.dim,
        views=args.views,
        noise_scale=args.noise,
        occlusion_rate=args.occlusion_rate,
        seed=args.seed,
    )
    write_dataset(generate(spec), args.out)
    print(f"wrote {args.groups * args.views} samples to {args.out}", file=sys.stderr)
    return 0


def _cmd_train(args) -> int:
    dataset = load_dataset(args.data)
    config = Config(
        lr=args.lr,
        epochs=args.epochs,
        batch_size=args.batch,
        delta=args.delta,
        num_layers=args.layers,
        margin=args.margin,
        momentum=args.momentum,
        seed=args.seed,
    )
    params, log = train(
        dataset, config, checkpoint_path=args.out, checkpoint_every=args.checkpoint_every
    )
    write_checkpoint(params, resolve_config(config, dataset), args.out)
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(["epoch", "id_loss", "triplet_loss", "recon_loss", "total_loss"])
    for entry in log:
        writer.writerow(
            [entry.epoch] + [f"{v:.6f}" for v in
                             (entry.id_loss, entry.triplet_loss, entry.recon_loss, entry.total)]
        )
    return 0


def _cmd_match(args) -> int:
    dataset = load_dataset(args.data)
    params, config = read_checkpoint(args.ckpt)
    clusters, mode = _parse_clusters(args.clusters)
    config = dataclasses.replace(
        config,
        alpha=args.alpha,
        beta=args.beta,
        gamma=args.gamma,
        clusters=clusters,
        cluster_mode=mode,
        tau=args.tau,
    )
    queries, gallery = split_views(dataset, args.query_view, args.gallery_view)
    rankings = match_all(queries, gallery, params, config, threads=args.threads)

    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(
        ["query_id", "rank", "gallery_id", "p", "p_nod", "p_sub", "p_glo", "sub_skipped"]
    )
    for query, ranked in zip(queries, rankings):
        for rank, (idx, score) in enumerate(ranked, start=1):
            writer.writerow(
                [
                    query.group_id,
                    rank,
                    gallery[idx].group_id,
                    f"{score.p:.6f}",
                    f"{score.p_nod:.6f}",
                    f"{score.p_sub:.6f}",
                    f"{score.p_glo:.6f}",
                    "true" if score.sub_skipped else "false",
                ]
            )
    return 0


def _cmd_eval(args) -> int:
    per_query: dict[int, list[tuple[int, int]]] = {}
    with open(args.rankings, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            per_query.setdefault(int(row["query_id"]), []).append(
                (int(row["rank"]), int(row["gallery_id"]))
            )
    if not per_query:
        raise ValueError(f"{args.rankings}: no ranking rows")
    load_dataset(args.data)  # validates the dataset the rankings came from
    queries = sorted(per_query)
    ranked_ids = [[gid for _, gid in sorted(per_query[q])] for q in queries]
    truths = [{q} for q in queries]
    metrics = retrieval_metrics(ranked_ids, truths)

    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(["config", "rank1", "rank5", "rank10", "rank20", "map"])
    writer.writerow(
        ["default"]
        + [f"{metrics[k]:.4f}" for k in ("rank1", "rank5", "rank10", "rank20", "map")]
    )
    return 0


def _cmd_ablate(args) -> int:
    dataset = load_dataset(args.data)
    params, config = read_checkpoint(args.ckpt)
    rows = ablate(
        dataset,
        config,
        args.suite,
        params,
        query_view=args.query_view,
        gallery_view=args.gallery_view,
        threads=args.threads,
    )
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(["config", "rank1", "rank5", "rank10", "rank20", "map"])
    for row in rows:
        writer.writerow(
            [row.name]
            + [f"{v:.4f}" for v in (row.rank1, row.rank5, row.rank10, row.rank20, row.mean_ap)]
        )
    return 0


def _cmd_gradcheck(args) -> int:
    from .synth import SynthSpec, generate

    spec = SynthSpec(
        num_group_ids=2,
        members_range=(2, 4),
        d=args.dim,
        views=2,
        noise_scale=0.4,
        occlusion_rate=0.5,
        seed=args.seed,
    )
    batch = generate(spec)
    config = Config(num_layers=args.layers, max_members=4, seed=args.seed)
    config = resolve_config(config, batch)
    params = init_params(config, args.seed)
    labels = label_mapping(batch)
    report = gradient_check(batch, params, config, labels)

    worst = 0.0
    print(f"{'parameter':<20} {'max_rel_err':>12}")
    for name, err in report.items():
        print(f"{name:<20} {err:>12.3e}")
        worst = max(worst, err)
    print(f"{'worst':<20} {worst:>12.3e}")
    return 0 if worst <= 1e-4 else 1


_COMMANDS = {
    "synth": _cmd_synth,
    "train": _cmd_train,
    "match": _cmd_match,
    "eval": _cmd_eval,
    "ablate": _cmd_ablate,
    "gradcheck": _cmd_gradcheck,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ValueError, FloatingPointError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
