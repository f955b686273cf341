"""Command-line interface.

Subcommands: pretrain, inject, eval, build-contacts, split, probe.
Exit codes: 0 success, 1 data error, 2 config error.

Runs are deterministic: all randomness is derived per step from
(seed, step, purpose), so a resumed run reproduces the uninterrupted one
bitwise and two runs with the same config produce identical checkpoints.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt
from . import data as D
from . import metrics as MX
from . import objectives as O
from . import tokenizer as T
from .config import (
    STRUCTURAL_KEYS,
    RunConfig,
    build_config,
    parse_overrides,
    read_config_file,
)
from .errors import ConfigError, DataError, Error, FormatError
from .model import PROMPT_INIT_STD, ModelConfig, ProteinEncoder
from .numerics import Tensor

# rng stream purposes, mixed into the per-step seed tuple
_RNG_MLM_PICK = 0
_RNG_PAIR_PICK = 1
_RNG_MLM_MASK = 2
_RNG_NEGATIVES = 3


def _step_rng(seed: int, step: int, purpose: int) -> np.random.Generator:
    return np.random.default_rng((seed, step, purpose))


# ---------------------------------------------------------------------------
# corpus / batch assembly


def _load_corpus(fasta_path, max_len: int) -> list[T.TokenSequence]:
    table = D.parse_fasta(fasta_path)
    return [T.encode(seq, max_len, name) for name, seq in sorted(table.items())]


def _mlm_batch(corpus, cfg: RunConfig, step: int, prompts) -> O.MlmTaskBatch:
    rng = _step_rng(cfg.seed, step, _RNG_MLM_PICK)
    size = min(cfg.batch_seqs, len(corpus))
    idx = rng.choice(len(corpus), size=size, replace=False)
    seqs = [corpus[int(i)] for i in idx]
    probs = (cfg.mask_prob_mask, cfg.mask_prob_random, cfg.mask_prob_keep)
    masked = [
        T.apply_mlm_mask(s, cfg.mask_rate, (cfg.seed, step, _RNG_MLM_MASK, int(i)), probs)
        for i, s in zip(idx, seqs)
    ]
    return O.MlmTaskBatch(sequences=seqs, masked=masked, prompt_names=prompts)


def _encode_nodes(graph: D.PPIGraph, max_len: int) -> dict[str, T.TokenSequence]:
    return {
        name: T.encode(seq, max_len, name) for name, seq in sorted(graph.nodes.items())
    }


def _pair_pretrain_batch(
    graph: D.PPIGraph, encoded, cfg: RunConfig, step: int, prompts
) -> O.PairTaskBatch:
    """Sample positive rows plus an equal count of non-adjacent negatives.

    Files that carry explicit 0 labels supply their own negatives and are
    sampled as given.
    """
    rows = sorted(graph.edges.items())
    rng = _step_rng(cfg.seed, step, _RNG_PAIR_PICK)
    size = min(cfg.batch_pairs, len(rows))
    idx = rng.choice(len(rows), size=size, replace=False)
    pairs = []
    labels = []
    for i in idx:
        (a, b), bits = rows[int(i)]
        pairs.append((encoded[a], encoded[b]))
        labels.append(1.0 if bits.any() else 0.0)
    has_explicit_negatives = graph.label_width == 1 and any(
        not bits.any() for bits in graph.edges.values()
    )
    if not has_explicit_negatives:
        neg_rng = _step_rng(cfg.seed, step, _RNG_NEGATIVES)
        names = sorted(graph.nodes)
        got, tries = 0, 0
        while got < size and tries < 1000 * size:
            tries += 1
            a, b = (names[int(k)] for k in neg_rng.integers(len(names), size=2))
            if a == b:
                continue
            key = (a, b) if a < b else (b, a)
            if key in graph.edges:
                continue
            pairs.append((encoded[a], encoded[b]))
            labels.append(0.0)
            got += 1
        if got < size:
            raise DataError("graph too dense to sample non-interacting pairs")
    return O.PairTaskBatch(
        name="ppi",
        pairs=pairs,
        labels=np.array(labels).reshape(-1, 1),
        kind="binary",
        prompt_names=prompts,
    )


# ---------------------------------------------------------------------------
# run output helpers


def _metrics_log_header(cfg: RunConfig, task_order) -> list[str]:
    lines = [f"# config_hash={cfg.hash()}"]
    lines += [f"# {line}" for line in cfg.to_text().strip().splitlines()]
    cells = ["step", "l_conserve"] + [f"l_{t}" for t in task_order] + ["total", "ms"]
    lines.append(",".join(cells))
    return lines


def _checkpoint_path(out_dir: Path, step: int) -> Path:
    return out_dir / f"ckpt_step{step}.bin"


def _prune_checkpoints(out_dir: Path, keep_last: int) -> None:
    ckpts = sorted(
        out_dir.glob("ckpt_step*.bin"),
        key=lambda p: int(p.stem.replace("ckpt_step", "")),
    )
    for old in ckpts[:-keep_last]:
        old.unlink()


def _print_warnings(cfg: RunConfig) -> None:
    for note in cfg.warnings():
        print(note, file=sys.stderr)


# ---------------------------------------------------------------------------
# subcommands


def cmd_pretrain(args) -> int:
    overrides = _flag_overrides(args, ("fasta", "ppi", "out_dir", "steps", "seed"))
    base_text = None
    start_step = 0
    state: dict[str, np.ndarray] = {}
    model = None
    stored_cfg = None
    if args.resume:
        model, stored_cfg, state = ckpt.load_model(args.resume)
        base_text = stored_cfg.to_text()
    cfg = build_config(args.config, overrides, base_text=base_text)
    if stored_cfg is not None:
        _check_structural(cfg, stored_cfg, _supplied_keys(args, overrides))
    _print_warnings(cfg)
    if not cfg.fasta:
        raise ConfigError("pretrain needs a FASTA corpus (--fasta or config key fasta)")

    corpus = _load_corpus(cfg.fasta, cfg.max_len)
    if not corpus:
        raise DataError(f"{cfg.fasta}: empty corpus")
    graph = None
    encoded: dict[str, T.TokenSequence] = {}
    tasks: tuple[str, ...] = ()
    if cfg.ppi:
        graph, skips = D.parse_ppi_tsv(cfg.ppi)
        for line in skips:
            print(line, file=sys.stderr)
        graph.attach_sequences(D.parse_fasta(cfg.fasta))
        encoded = _encode_nodes(graph, cfg.max_len)
        tasks = ("ppi",)

    prompts = cfg.prompt_names()
    if model is not None:
        start_step = int(state.get("opt.step", np.asarray(0.0)))
    else:
        model = ProteinEncoder(ModelConfig.from_run_config(cfg), seed=cfg.seed)
    optimizer = O.Adam(
        model.parameters(),
        lr=cfg.lr,
        betas=(cfg.beta1, cfg.beta2),
        eps=cfg.adam_eps,
        warmup_updates=cfg.warmup_updates,
    )
    if state:
        optimizer.load_state_entries(state)
    policy = (
        O.default_policy(prompts, tasks) if cfg.routing else O.open_policy(prompts, tasks)
    )

    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    T.write_vocab(out_dir / "vocab.txt")
    log_path = out_dir / "metrics.csv"
    log_mode = "a" if args.resume and log_path.exists() else "w"
    with open(log_path, log_mode) as log:
        if log_mode == "w":
            log.write("\n".join(_metrics_log_header(cfg, tasks)) + "\n")
        for step in range(start_step, cfg.steps):
            mlm = _mlm_batch(corpus, cfg, step, prompts)
            pair_batches = []
            if graph is not None:
                pair_batches.append(_pair_pretrain_batch(graph, encoded, cfg, step, prompts))
            report = O.train_step(
                model,
                optimizer,
                mlm,
                pair_batches,
                policy,
                cfg.lambda_weight,
                cfg.alpha(),
                step=step,
                mlm_reduction=cfg.mlm_reduction,
            )
            log.write(report.log_line(tasks) + "\n")
            if (step + 1) % cfg.checkpoint_every == 0:
                ckpt.save_model(_checkpoint_path(out_dir, step + 1), model, cfg, optimizer)
                _prune_checkpoints(out_dir, cfg.keep_last)
    ckpt.save_model(out_dir / "final.bin", model, cfg, optimizer)
    print(f"pretrain complete: {cfg.steps} steps, checkpoint {out_dir / 'final.bin'}")
    return 0


def _supplied_keys(args, overrides: dict) -> set[str]:
    """Config keys the user explicitly set via --set, flags or the file."""
    keys = set(overrides)
    if getattr(args, "config", None):
        keys |= set(read_config_file(args.config))
    return keys


def _check_structural(cfg: RunConfig, stored: RunConfig, supplied: set[str]) -> None:
    """Refuse user-supplied values that contradict the checkpoint topology."""
    from .config import _KEY_TO_FIELD

    for key in supplied:
        fname = _KEY_TO_FIELD.get(key, key)
        if key in STRUCTURAL_KEYS and getattr(cfg, fname) != getattr(stored, fname):
            raise ConfigError(
                f"{key}={getattr(cfg, fname)!r} contradicts checkpoint "
                f"value {getattr(stored, fname)!r} (config hash {stored.hash()[:12]})"
            )


def _load_for_task(args, extra_keys: tuple[str, ...] = ()):
    """Common checkpoint + config assembly for inject/eval/probe."""
    model, stored_cfg, state = ckpt.load_model(args.checkpoint)
    overrides = _flag_overrides(args, extra_keys)
    cfg = build_config(args.config, overrides, base_text=stored_cfg.to_text())
    _check_structural(cfg, stored_cfg, _supplied_keys(args, overrides))
    return model, cfg, stored_cfg


_TASKS = ("ppi", "contact", "ss", "regress")


def _read_labeled_tsv(path, n_value_cols: int | None = None):
    """Rows of id, sequence, value... used by ss/regress tasks."""
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.rstrip("\n")
            if not stripped.strip() or stripped.startswith("#"):
                continue
            cells = stripped.split("\t")
            if len(cells) < 3:
                raise FormatError(f"{path}:{lineno}: expected id, sequence, value columns")
            rows.append((cells[0].strip(), cells[1].strip(), cells[2:]))
    if not rows:
        raise DataError(f"{path}: no data rows")
    return rows


def cmd_inject(args) -> int:
    """Register a new prompt and train it (plus the task head) on a task.

    The encoder is frozen unless --no-freeze-encoder is given; frozen
    parameters are simply absent from the optimizer, so they stay bitwise
    identical to the base checkpoint.
    """
    model, cfg, stored_cfg = _load_for_task(args, ("steps", "lr", "seed"))
    _print_warnings(cfg)
    prompt_name = args.prompt
    init_rng = np.random.default_rng((cfg.seed, len(model.prompts)))
    model.prompts.register(
        prompt_name, Tensor(init_rng.normal(0.0, PROMPT_INIT_STD, cfg.d))
    )
    new_prompts = cfg.prompt_names() + (prompt_name,)
    cfg = build_config(
        base_text=cfg.to_text(), overrides={"prompts": ",".join(new_prompts)}
    )

    trainable: dict[str, Tensor] = {f"prompt.{prompt_name}": model.prompts.get(prompt_name)}
    all_params = model.parameters()
    for name in ("head.pair.w", "head.pair.b", "head.pair_bin.w", "head.pair_bin.b"):
        trainable[name] = all_params[name]
    if args.no_freeze_encoder:
        trainable.update(model.encoder_parameters())

    optimizer = O.Adam(
        trainable, lr=cfg.lr, betas=(cfg.beta1, cfg.beta2), eps=cfg.adam_eps,
        warmup_updates=cfg.warmup_updates,
    )
    # the new prompt learns from the task; pre-existing prompts keep their
    # original sources (not trained here, but the policy stays truthful)
    routes = {name: frozenset({"ppi"}) for name in model.prompts.names()}
    if "Seq" in routes:
        routes["Seq"] = frozenset({O.CONSERVE})
    policy = O.RoutingPolicy(prompt_routes=routes, encoder_losses=frozenset({"ppi"}))

    batches_fn = _inject_ppi_batches(args, cfg)
    prompt_sel = cfg.prompt_names()
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "metrics.csv", "w") as log:
        log.write("\n".join(_metrics_log_header(cfg, ("ppi",))) + "\n")
        for step in range(cfg.steps):
            batch = batches_fn(step, prompt_sel)
            report = O.train_step(
                model, optimizer, None, [batch], policy, cfg.lambda_weight,
                cfg.alpha(), step=step, mlm_reduction=cfg.mlm_reduction,
            )
            log.write(report.log_line(("ppi",)) + "\n")
    ckpt.save_model(out_dir / "injected.bin", model, cfg, optimizer)
    print(f"inject complete: prompt {prompt_name!r}, checkpoint {out_dir / 'injected.bin'}")
    return 0


def _inject_ppi_batches(args, cfg: RunConfig):
    if not args.data or not args.fasta:
        raise ConfigError("inject --task ppi needs --data (TSV) and --fasta")
    graph, skips = D.parse_ppi_tsv(args.data)
    for line in skips:
        print(line, file=sys.stderr)
    graph.attach_sequences(D.parse_fasta(args.fasta))
    encoded = _encode_nodes(graph, cfg.max_len)
    rows = sorted(graph.edges.items())
    kind = "binary" if graph.label_width == 1 else "types"

    def build(step: int, prompts) -> O.PairTaskBatch:
        rng = _step_rng(cfg.seed, step, _RNG_PAIR_PICK)
        size = min(cfg.batch_pairs, len(rows))
        idx = rng.choice(len(rows), size=size, replace=False)
        pairs = [(encoded[rows[int(i)][0][0]], encoded[rows[int(i)][0][1]]) for i in idx]
        labels = np.stack([rows[int(i)][1].astype(np.float64) for i in idx])
        return O.PairTaskBatch(
            name="ppi", pairs=pairs, labels=labels, kind=kind, prompt_names=prompts
        )

    return build


def cmd_eval(args) -> int:
    model, cfg, stored_cfg = _load_for_task(args)
    if args.task not in _TASKS:
        raise ConfigError(f"task must be one of {_TASKS}, got {args.task!r}")
    if args.prompts is None:
        prompt_sel = model.prompts.names()
    elif args.prompts == "":
        prompt_sel = ()
    else:
        prompt_sel = tuple(p.strip() for p in args.prompts.split(","))
        for p in prompt_sel:
            model.prompts.get(p)  # raises ConfigError on unknown names

    records: list[tuple[str, str, float]] = []
    if args.task == "ppi":
        records = _eval_ppi(model, cfg, args, prompt_sel)
    elif args.task == "contact":
        records = _eval_contact(model, cfg, args, prompt_sel)
    elif args.task == "ss":
        records = _eval_ss(model, cfg, args, prompt_sel)
    else:
        records = _eval_regress(model, cfg, args, prompt_sel)

    lines = [f"# config_hash={cfg.hash()}", "task,metric,value,prompts"]
    sel = "|".join(prompt_sel)
    for task, metric, value in records:
        lines.append(f"{task},{metric},{value!r},{sel}")
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    sys.stdout.write(text)
    return 0


def _eval_ppi(model, cfg, args, prompt_sel):
    if not args.data or not args.fasta:
        raise ConfigError("eval --task ppi needs --data (TSV) and --fasta")
    graph, skips = D.parse_ppi_tsv(args.data)
    for line in skips:
        print(line, file=sys.stderr)
    graph.attach_sequences(D.parse_fasta(args.fasta))
    encoded = _encode_nodes(graph, cfg.max_len)
    kind = "binary" if graph.label_width == 1 else "types"
    pooled: dict[str, Tensor] = {}

    def pool_of(name: str) -> Tensor:
        if name not in pooled:
            pooled[name] = model.pool(model.encode(encoded[name], prompt_sel))
        return pooled[name]

    preds, truths = [], []
    for (a, b), bits in sorted(graph.edges.items()):
        logits = model.pair_logits(pool_of(a), pool_of(b), kind).data
        preds.append((logits > 0).astype(np.int64))
        truths.append(bits)
    f1 = MX.micro_f1(np.stack(preds), np.stack(truths))
    acc = float(np.mean(np.stack(preds) == np.stack(truths)))
    return [("ppi", "micro_f1", f1), ("ppi", "accuracy", acc)]


def _eval_contact(model, cfg, args, prompt_sel):
    if not args.maps_dir or (not args.fasta and not args.scores_dir):
        raise ConfigError(
            "eval --task contact needs --maps-dir plus --fasta (model scores) "
            "or --scores-dir (precomputed scores)"
        )
    maps_dir = Path(args.maps_dir)
    map_files = sorted(maps_dir.glob("*.cmap"))
    if not map_files:
        raise DataError(f"{maps_dir}: no .cmap files")
    table = D.parse_fasta(args.fasta) if args.fasta else {}
    per_class: dict[str, list[float]] = {name: [] for name in MX.RANGE_CLASSES}
    truncated = 0
    for map_file in map_files:
        truth = D.read_contact_map(map_file)
        stem = map_file.stem
        if args.scores_dir:
            scores = D.read_contact_map(Path(args.scores_dir) / map_file.name).bits.astype(
                np.float64
            )
        else:
            if stem not in table:
                raise DataError(f"no sequence with id {stem!r} for map {map_file}")
            seq = T.encode(table[stem], cfg.max_len, stem)
            if seq.n_residues != truth.n:
                raise DataError(
                    f"{map_file}: map n={truth.n} but sequence {stem!r} has "
                    f"{seq.n_residues} residues"
                )
            scores = model.contact_logits(model.encode(seq, prompt_sel)).data
        for name, rc in MX.RANGE_CLASSES.items():
            result = MX.precision_at_l_half(scores, truth, rc)
            per_class[name].append(result.precision)
            truncated += int(result.truncated)
    records = [
        ("contact", f"p_at_l2_{name}", float(np.mean(vals)))
        for name, vals in per_class.items()
    ]
    records.append(("contact", "truncated_evals", float(truncated)))
    return records


def _eval_ss(model, cfg, args, prompt_sel):
    if not args.data:
        raise ConfigError("eval --task ss needs --data (id, sequence, labels TSV)")
    classes = args.classes
    rows = _read_labeled_tsv(args.data)
    preds, truths = [], []
    for name, residues, values in rows:
        label_str = values[0]
        if len(label_str) != len(residues):
            raise FormatError(
                f"{args.data}: row {name!r} has {len(label_str)} labels "
                f"for {len(residues)} residues"
            )
        truth = np.array([int(c) for c in label_str], dtype=np.int64)
        seq = T.encode(residues, cfg.max_len, name)
        logits = model.token_logits(model.encode(seq, prompt_sel), classes)
        preds.append(np.argmax(logits.data, axis=1))
        truths.append(truth)
    acc = MX.q_accuracy(np.concatenate(preds), np.concatenate(truths), classes)
    return [("ss", f"q{classes}", acc)]


def _eval_regress(model, cfg, args, prompt_sel):
    if not args.data:
        raise ConfigError("eval --task regress needs --data (id, sequence, value TSV)")
    rows = _read_labeled_tsv(args.data)
    preds, truths = [], []
    for name, residues, values in rows:
        try:
            truths.append(float(values[0]))
        except ValueError:
            raise FormatError(f"{args.data}: row {name!r} has non-numeric value {values[0]!r}")
        seq = T.encode(residues, cfg.max_len, name)
        pooled = model.pool(model.encode(seq, prompt_sel))
        preds.append(float(model.regress(pooled).data))
    rho = MX.spearman_rho(np.array(preds), np.array(truths))
    return [("regress", "spearman", rho)]


def cmd_build_contacts(args) -> int:
    cfg = build_config(args.config, _flag_overrides(args, ("contact_threshold",)))
    pdb_dir = Path(args.pdb_dir)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    report_lines = [f"# config_hash={cfg.hash()}"]
    hard_errors = 0
    pdb_files = sorted(pdb_dir.glob("*.pdb"))
    for pdb_file in pdb_files:
        try:
            chains, skips = D.parse_pdb(pdb_file)
        except (FormatError, DataError) as exc:
            report_lines.append(f"error: {exc}")
            print(f"error: {exc}", file=sys.stderr)
            hard_errors += 1
            continue
        report_lines.extend(skips)
        for chain_id, residues in sorted(chains.items()):
            cmap = D.build_contact_map(residues, cfg.contact_threshold, tag=args.tag)
            out_path = out_dir / f"{pdb_file.stem}_{chain_id}.cmap"
            D.write_contact_map(cmap, out_path)
            report_lines.append(f"{out_path.name}: n={cmap.n} from {pdb_file.name}")
    (out_dir / "report.txt").write_text("\n".join(report_lines) + "\n")
    print(f"built contact maps for {len(pdb_files)} files, {hard_errors} hard errors")
    return 1 if hard_errors else 0


def cmd_split(args) -> int:
    graph, skips = D.parse_ppi_tsv(args.ppi)
    for line in skips:
        print(line, file=sys.stderr)
    spec = D.split_graph(graph, args.mode, args.fraction, args.seed)
    prefix = Path(args.out_prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    for part, edges in (("train", spec.train_edges), ("test", spec.test_edges)):
        with open(f"{prefix}_{part}.tsv", "w") as fh:
            for a, b in edges:
                bits = "\t".join(str(int(v)) for v in graph.edges[(a, b)])
                fh.write(f"{a}\t{b}\t{bits}\n")
    print(
        f"split mode={spec.mode} seed={spec.seed} root={spec.root} "
        f"selected={len(spec.selected)} train={len(spec.train_edges)} "
        f"test={len(spec.test_edges)}"
    )
    return 0


def cmd_probe(args) -> int:
    model, cfg, _ = _load_for_task(args, ("probe_cutoff",))
    model.prompts.get(args.prompt)
    table = D.parse_fasta(args.fasta)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, residues in sorted(table.items()):
        seq = T.encode(residues, cfg.max_len, name)
        report = MX.embedding_shift_probe(model, seq, args.prompt, cfg.probe_cutoff)
        lines = [f"# config_hash={cfg.hash()}"] + report.csv_lines()
        (out_dir / f"{name}.csv").write_text("\n".join(lines) + "\n")
        flagged = sum(e.flagged for e in report.entries)
        print(f"{name}: {len(report.entries)} residues, {flagged} above cutoff")
    return 0


# ---------------------------------------------------------------------------
# argument plumbing


def _flag_overrides(args, keys: tuple[str, ...]) -> dict[str, str]:
    """Combine --set pairs with direct flags (flags win)."""
    overrides = parse_overrides(args.set or [])
    for key in keys:
        val = getattr(args, key, None)
        if val is not None:
            overrides[key] = str(val)
    return overrides


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", default=None, help="flat key=value config file")
    p.add_argument(
        "--set", action="append", default=[], metavar="KEY=VALUE",
        help="override a config key (repeatable; wins over the file)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="protprompt",
        description="prompt-guided knowledge injection for protein encoders",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pretrain", help="multi-task pretraining run")
    _add_common(p)
    p.add_argument("--fasta", default=None, help="training corpus")
    p.add_argument("--ppi", default=None, help="interaction TSV for the injection task")
    p.add_argument("--out-dir", dest="out_dir", default=None)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--resume", default=None, help="checkpoint to continue from")
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("inject", help="train a new prompt on a task")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--prompt", required=True, help="name of the new prompt")
    p.add_argument("--task", required=True, choices=("ppi",))
    p.add_argument("--data", default=None, help="task data file")
    p.add_argument("--fasta", default=None, help="sequences for the task data")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument(
        "--no-freeze-encoder", action="store_true",
        help="also update encoder parameters (frozen by default)",
    )
    p.set_defaults(func=cmd_inject)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a task")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--task", required=True, choices=_TASKS)
    p.add_argument("--data", default=None, help="task data file (ppi/ss/regress)")
    p.add_argument("--fasta", default=None)
    p.add_argument("--maps-dir", dest="maps_dir", default=None, help="truth contact maps")
    p.add_argument(
        "--scores-dir", dest="scores_dir", default=None,
        help="read contact scores from files instead of the model",
    )
    p.add_argument("--classes", type=int, default=3, choices=(3, 8))
    p.add_argument(
        "--prompts", default=None,
        help="comma list of prompts to attach ('' = none; default: all)",
    )
    p.add_argument("--out", default=None, help="also write records to this file")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("build-contacts", help="PDB directory to contact maps")
    _add_common(p)
    p.add_argument("--pdb-dir", dest="pdb_dir", required=True)
    p.add_argument("--out-dir", dest="out_dir", required=True)
    p.add_argument(
        "--threshold", dest="contact_threshold", type=float, default=None,
        help="contact distance threshold in angstroms",
    )
    p.add_argument("--tag", default="native", choices=D.CONTACT_TAGS)
    p.set_defaults(func=cmd_build_contacts)

    p = sub.add_parser("split", help="BFS/DFS edge split of an interaction graph")
    p.add_argument("--ppi", required=True)
    p.add_argument("--mode", required=True, choices=("bfs", "dfs"))
    p.add_argument("--fraction", type=float, required=True, help="test node fraction")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--out-prefix", dest="out_prefix", required=True)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("probe", help="per-residue embedding shift report")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--fasta", required=True)
    p.add_argument("--prompt", required=True)
    p.add_argument(
        "--cutoff", dest="probe_cutoff", type=float, default=None,
        help="flag residues whose representation moved further than this",
    )
    p.add_argument("--out-dir", dest="out_dir", required=True)
    p.set_defaults(func=cmd_probe)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 1
    except Error as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
