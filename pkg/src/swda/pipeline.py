"""End-to-end trainers: single-target adaptation, the three-part
multi-target procedure, evaluation, and metrics export.

Per adaptation iteration, in order: (1) source batch, cross-entropy step;
(2) target batch, information-maximization and adversarial-logit losses;
(3) if the strong set is initialized, fuse strong+weak samples, select a
pseudo-labeled batch mirroring the predicted label distribution, and
compute the strong-weak loss on it; (4) one optimizer step on the
weighted sum of the three target losses, routing the adversarial term
through gradient reversal; (5) weak-set update from the target batch;
(6) periodic strong-set refresh over all target samples. In multi-target
part 3 the strong entries of classes with a qualifying peer are swapped
for peer pseudo samples at fusion time, re-drawn every iteration.
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .config import (
    STREAM_FUSION,
    STREAM_PEER,
    STREAM_SOURCE,
    STREAM_TARGET,
    BatchSampler,
    ExperimentConfig,
    derive_seed,
    stream_rng,
)
from .datasets import Domain
from .errors import InvalidDatasetError, InvalidInputError
from .losses import (
    adversarial_logit_loss,
    cross_entropy,
    info_max_loss,
    strong_weak_loss,
)
from .network import (
    NetworkParams,
    add_trees,
    backward,
    forward,
    init_optimizer_state,
    init_params,
    lr_schedule,
    sgd_step,
)
from .repsets import (
    PseudoStrongSet,
    empty_weak_set,
    fuse,
    harvest_pseudo_strong,
    select_sw_batch,
    update_strong_set,
    update_weak_set,
)
from .scaffolding import (
    DistanceGraph,
    build_distance_graph,
    centroids_for_domains,
    check_source_classes,
    replace_with_peers,
    train_source_only,
)

# sub-seed tags for nested runs
_TAG_REPEAT = 5
_TAG_PART1 = 10
_TAG_PART2 = 11
_TAG_PART3 = 12


@dataclass
class RunMetrics:
    loss_ce: list
    loss_im: list
    loss_all: list
    loss_sw: list
    accuracy_iterations: list  # iterations at which target accuracy was measured
    accuracy_series: list
    final_accuracy: float | None  # None when the target carries no labels
    wall_clock_seconds: float = 0.0  # informational; never serialized


@dataclass
class PeerContext:
    """Everything part 3 needs to swap strong entries after each refresh."""

    graph: DistanceGraph
    target_slot: int  # this target's row in the graph (>= 1)
    peers: dict  # slot -> PseudoStrongSet of every other target
    rng: np.random.Generator


def evaluate(params: NetworkParams, domain: Domain) -> float:
    """Fraction of samples whose argmax probability hits the label."""
    if domain.labels is None:
        raise InvalidDatasetError(f"domain {domain.name!r} has no labels to evaluate against")
    if domain.n == 0:
        raise InvalidDatasetError(f"domain {domain.name!r} is empty")
    probs = forward(params, domain.samples).probs
    return float(np.mean(np.argmax(probs, axis=1) == domain.labels))


def _adaptation_run(
    config: ExperimentConfig,
    source: Domain,
    target: Domain,
    peer_ctx: PeerContext | None,
):
    check_source_classes(source, config.network.num_classes)
    if target.n == 0:
        raise InvalidDatasetError(f"target domain {target.name!r} is empty")
    if target.samples.shape[1] != source.samples.shape[1]:
        raise InvalidInputError("source and target dimensionality differ")

    start = time.perf_counter()
    w = config.weights
    params = init_params(config.network, config.seed)
    state = init_optimizer_state(params)
    src_sampler = BatchSampler(source.n, config.batch_size, stream_rng(config.seed, STREAM_SOURCE))
    tgt_sampler = BatchSampler(target.n, config.batch_size, stream_rng(config.seed, STREAM_TARGET))
    fusion_rng = stream_rng(config.seed, STREAM_FUSION)

    strong = None
    weak = empty_weak_set(config.network.num_classes)
    metrics = RunMetrics([], [], [], [], [], [], None)

    for it in range(config.max_iterations):
        q = it / config.max_iterations
        lr_head = lr_schedule(q, config.eta0_head, config.schedule_a, config.schedule_b)
        lr_gen = lr_schedule(q, config.eta0_generator, config.schedule_a, config.schedule_b)

        # (1) supervised step on the source
        idx = src_sampler.next_batch()
        fwd_s = forward(params, source.samples[idx])
        ce = cross_entropy(fwd_s.probs, source.labels[idx])
        sgd_step(params, backward(params, fwd_s, ce.grad_wrt_logits), state, lr_head, lr_gen)

        # (2) unsupervised losses on a target batch
        tidx = tgt_sampler.next_batch()
        fwd_t = forward(params, target.samples[tidx])
        im = info_max_loss(fwd_t.probs)
        all_ = adversarial_logit_loss(fwd_t.logits, fwd_t.probs, w.lam)
        grads = add_trees(
            backward(params, fwd_t, w.k1 * im.grad_wrt_logits),
            backward(params, fwd_t, w.k2 * all_.grad_wrt_logits, reverse_below_classifier=True),
        )

        # (3) strong-weak supervision once the strong set exists; with peers,
        # each iteration re-draws replacement samples so no single draw
        # dominates a refresh window
        sw_value = 0.0
        if strong is not None:
            effective = strong
            if peer_ctx is not None:
                effective = replace_with_peers(
                    strong, peer_ctx.peers, peer_ctx.graph, peer_ctx.target_slot, peer_ctx.rng
                )
            fused = fuse(effective, weak, fusion_rng)
            pred = np.argmax(fwd_t.probs, axis=1)
            sw_batch = select_sw_batch(fused, pred)
            if sw_batch.inputs.shape[0]:
                fwd_sw = forward(params, sw_batch.inputs)
                sw = strong_weak_loss(fwd_sw.probs, sw_batch.pseudo_labels)
                sw_value = sw.value
                grads = add_trees(grads, backward(params, fwd_sw, w.k3 * sw.grad_wrt_logits))

        # (4) one optimizer step for the combined target objective
        sgd_step(params, grads, state, lr_head, lr_gen)

        # (5) weak set follows every batch
        weak = update_weak_set(weak, target.samples[tidx], fwd_t.probs, w.lam)

        # (6) periodic strong refresh over the whole target
        if (it + 1) % config.strong_refresh_period == 0:
            fwd_full = forward(params, target.samples)
            strong = update_strong_set(target.samples, fwd_full.norm_features, fwd_full.probs, target.name)

        metrics.loss_ce.append(ce.value)
        metrics.loss_im.append(im.value)
        metrics.loss_all.append(all_.value)
        metrics.loss_sw.append(sw_value)
        if (it + 1) % config.accuracy_eval_period == 0 and target.labels is not None:
            metrics.accuracy_iterations.append(it + 1)
            metrics.accuracy_series.append(evaluate(params, target))

    if target.labels is not None:
        metrics.final_accuracy = evaluate(params, target)
    probs_full = forward(params, target.samples).probs
    pseudo = harvest_pseudo_strong(target.samples, probs_full, w.lam, config.pseudo_pool_cap)
    metrics.wall_clock_seconds = time.perf_counter() - start
    return params, metrics, pseudo


def train_single_target(config: ExperimentConfig, source: Domain, target: Domain):
    """Adaptation to one unlabeled target; returns (params, metrics,
    harvested pseudo strong set)."""
    return _adaptation_run(config, source, target, peer_ctx=None)


@dataclass
class MultiTargetResult:
    per_target: list  # [(NetworkParams, RunMetrics)] in input target order
    graph: DistanceGraph
    pseudo_sets: dict  # slot -> PseudoStrongSet from part 1
    source_params: NetworkParams


def _part1_task(args):
    config, source, target, slot = args
    cfg = replace(config, seed=derive_seed(config.seed, _TAG_PART1, slot))
    _, _, pseudo = train_single_target(cfg, source, target)
    return slot, pseudo


def _part3_task(args):
    config, source, target, slot, graph, peers, enable_replacement = args
    cfg = replace(config, seed=derive_seed(config.seed, _TAG_PART3, slot))
    ctx = None
    if enable_replacement:
        ctx = PeerContext(graph, slot, peers, stream_rng(cfg.seed, STREAM_PEER))
    params, metrics, _ = _adaptation_run(cfg, source, target, ctx)
    return slot, params, metrics


def _run_tasks(fn, tasks, jobs: int):
    if jobs <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, tasks))


def train_multi_target(
    config: ExperimentConfig,
    source: Domain,
    targets: list,
    jobs: int = 1,
    enable_replacement: bool = True,
) -> MultiTargetResult:
    """Three-part multi-target adaptation.

    Part 1 runs single-target adaptation per target and harvests its
    pseudo strong set. Part 2 trains a source-only network and builds the
    frozen class-wise distance graph over source + targets. Part 3
    re-trains each target from a fresh initialization, replacing strong
    entries with qualifying peers' pseudo samples after every refresh.
    ``enable_replacement=False`` turns part 3 into plain single-target
    runs (used to isolate the contribution of peer scaffolding).
    """
    if not targets:
        raise InvalidInputError("need at least one target domain")

    part1 = _run_tasks(
        _part1_task,
        [(config, source, t, slot) for slot, t in enumerate(targets, start=1)],
        jobs,
    )
    pseudo_sets = dict(part1)

    cfg_src = replace(config, seed=derive_seed(config.seed, _TAG_PART2))
    source_params = train_source_only(cfg_src, source)
    graph = build_distance_graph(centroids_for_domains(source_params, [source] + list(targets)))

    part3 = _run_tasks(
        _part3_task,
        [
            (
                config,
                source,
                t,
                slot,
                graph,
                {j: ps for j, ps in pseudo_sets.items() if j != slot},
                enable_replacement,
            )
            for slot, t in enumerate(targets, start=1)
        ],
        jobs,
    )
    by_slot = {slot: (params, metrics) for slot, params, metrics in part3}
    per_target = [by_slot[slot] for slot in range(1, len(targets) + 1)]
    return MultiTargetResult(per_target, graph, pseudo_sets, source_params)


def part3_seed(config_seed: int, target_index: int) -> int:
    """Seed of the part-3 run for targets[target_index] under train_multi_target.

    A single-target baseline started from this seed shares every random
    stream with the corresponding part-3 run, so the two differ only by
    peer replacement; ablations can compare them as matched pairs.
    """
    return derive_seed(config_seed, _TAG_PART3, target_index + 1)


def repeat_single_target(config: ExperimentConfig, source: Domain, target: Domain):
    """num_runs independently seeded runs; returns (metrics list, mean final
    accuracy)."""
    all_metrics = []
    for r in range(config.num_runs):
        cfg = replace(config, seed=derive_seed(config.seed, _TAG_REPEAT, r))
        _, metrics, _ = train_single_target(cfg, source, target)
        all_metrics.append(metrics)
    finals = [m.final_accuracy for m in all_metrics if m.final_accuracy is not None]
    mean_final = float(np.mean(finals)) if finals else None
    return all_metrics, mean_final


# --- metrics export -----------------------------------------------------------

def metrics_to_json(metrics: RunMetrics, config_echo: dict | None = None) -> str:
    """Deterministic JSON document; wall clock deliberately left out so
    identical runs produce identical files."""
    doc = {
        "config": config_echo or {},
        "loss_ce": metrics.loss_ce,
        "loss_im": metrics.loss_im,
        "loss_all": metrics.loss_all,
        "loss_sw": metrics.loss_sw,
        "accuracy_iterations": metrics.accuracy_iterations,
        "accuracy_series": metrics.accuracy_series,
        "final_accuracy": metrics.final_accuracy,
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def loss_curves_csv(metrics: RunMetrics) -> str:
    lines = ["iteration,loss_ce,loss_im,loss_all,loss_sw"]
    for i in range(len(metrics.loss_ce)):
        lines.append(
            f"{i},{metrics.loss_ce[i]:.17g},{metrics.loss_im[i]:.17g},"
            f"{metrics.loss_all[i]:.17g},{metrics.loss_sw[i]:.17g}"
        )
    return "\n".join(lines) + "\n"
