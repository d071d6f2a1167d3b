"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 input/format error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .attention import ToyModel, train
from .core import (
    Codebook,
    Config,
    DimMismatch,
    DynMaskError,
    MotionSequence,
    RangeError,
    TextCondition,
    UnknownKey,
    read_config_file,
    schedule_count,
    validate_config,
)
from .decoding import decode
from .experiments import DEFAULT_RECIPE, TRAIN_RECIPE, DegenerateLabels, signal_correlations
from .io import (
    InputError,
    fmt,
    load_checkpoint,
    read_matrix_csv,
    read_motion,
    read_vector,
    rng_for,
    save_checkpoint,
    write_manifest,
    write_matrix_csv,
)
from .masking import cfs_select, cosine_ratio, dynamic_scores, semantic_scores
from .spectral import msd_sequence, similarity_matrix
from .tokenizer import BadSpec, fit_codebook, lookup_embeddings, quantize, synth_corpus

EXIT_CONFIG, EXIT_INPUT = 2, 3


class ConfigError(DynMaskError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_CONFIG)


_FLAG_KEYS = {
    "window": "W", "epsilon": "epsilon", "tau": "tau", "alpha0": "alpha0",
    "lambda_sem": "lambda_sem", "r_exp": "r_exp", "lambda_d": "lambda_d", "beta": "beta",
    "sigma_max": "sigma_max", "steps": "steps", "t_global": "t_global", "epochs": "epochs",
    "lr": "lr", "seed": "seed", "dim": "dim", "layers": "layers", "heads": "heads",
}


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="key=value config file")
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--window", type=int)
    for flag in ("epsilon", "tau", "alpha0", "lambda-sem", "lambda-d", "beta", "sigma-max",
                 "t-global", "lr"):
        p.add_argument(f"--{flag}", type=float)
    for flag in ("r-exp", "steps", "epochs", "dim", "layers", "heads"):
        p.add_argument(f"--{flag}", type=int)


def resolve_config(args) -> Config:
    raw = {}
    if args.config is not None:
        if not args.config.is_file():
            raise ConfigError(f"{args.config}: no such config file")
        raw.update(read_config_file(args.config))
    for attr, key in _FLAG_KEYS.items():
        val = getattr(args, attr, None)
        if val is not None:
            raw[key] = val
    return validate_config(raw)


def _synth_args(p):
    p.add_argument("--synth", help=f"synthetic recipe, e.g. {DEFAULT_RECIPE!r}")
    p.add_argument("--n-seq", type=int, default=1)
    p.add_argument("--dims", type=int, default=4, help="feature dims for synthetic input")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dynmask", description="Complexity-aware masked motion generation toolkit")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("analyze", help="per-frame spectral descriptors")
    _common(p)
    p.add_argument("--input", type=Path, help="motion CSV or JSONL")
    _synth_args(p)
    p.add_argument("--codebook", type=Path)
    p.add_argument("--similarity", action="store_true", help="also write the similarity matrix")

    p = sub.add_parser("maskplan", help="content-focused mask selection for one sequence")
    _common(p)
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--condition", type=Path, required=True)
    p.add_argument("--codebook", type=Path, required=True)
    p.add_argument("--K", type=int)
    p.add_argument("--r", type=float)

    p = sub.add_parser("train", help="fit codebook, tokenize and train the toy model")
    _common(p)
    p.add_argument("--corpus", type=Path, help="directory of motion CSV/JSONL files")
    p.add_argument("--synth", help=f"synthetic recipe (default {TRAIN_RECIPE!r})")
    p.add_argument("--n-seq", type=int, default=8)
    p.add_argument("--dims", type=int, default=4)
    p.add_argument("--codebook", type=Path)
    p.add_argument("--vocab", type=int, default=16)
    p.add_argument("--strategy", choices=("cfs", "uniform"), default="cfs")

    p = sub.add_parser("generate", help="complexity-aware iterative decoding")
    _common(p)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--condition", type=Path, required=True)
    p.add_argument("--length", type=int, required=True)

    p = sub.add_parser("compare-signals", help="rank correlation of complexity signals with labels")
    _common(p)
    p.add_argument("--synth", default=DEFAULT_RECIPE)
    p.add_argument("--n-seq", type=int, default=8)
    p.add_argument("--dims", type=int, default=4)
    return parser


def _load_sequence(args, cfg: Config) -> tuple[MotionSequence, dict]:
    if args.input is not None:
        return MotionSequence.from_frames(read_motion(args.input)), {"input": args.input}
    if args.synth:
        corpus = synth_corpus(args.synth, 1, D_m=args.dims, seed=int(rng_for(cfg.seed, "corpus").integers(2**31)),
                              W=cfg.W)
        return corpus.sequences[0], {}
    raise ConfigError("need --input or --synth")


def _embed(frames, codebook_path: Path | None):
    if codebook_path is None:
        return frames, None
    cb = Codebook(read_matrix_csv(codebook_path))
    if cb.D != frames.shape[1]:
        raise DimMismatch(f"codebook dim {cb.D} != feature dim {frames.shape[1]}")
    return lookup_embeddings(quantize(frames, cb), cb), cb


def cmd_analyze(args, cfg: Config) -> int:
    seq, inputs = _load_sequence(args, cfg)
    emb, _ = _embed(seq.frames, args.codebook)
    if args.codebook is not None:
        inputs["codebook"] = args.codebook
    prof = msd_sequence(emb, seq.valid, cfg)
    header = "t,omega," + ",".join(f"phi_{k}" for k in range(cfg.W))
    write_matrix_csv(args.out / "msd.csv", np.column_stack([prof.omega, prof.phi]), header, index=True)
    if args.similarity:
        write_matrix_csv(args.out / "similarity.csv", similarity_matrix(prof, cfg).s)
    write_manifest(args.out, "analyze", cfg, inputs, {"synth": args.synth})
    return 0


def cmd_maskplan(args, cfg: Config) -> int:
    if (args.K is None) == (args.r is None):
        raise ConfigError("supply exactly one of --K or --r")
    frames = read_motion(args.input)
    cond = TextCondition(read_vector(args.condition))
    emb, cb = _embed(frames, args.codebook)
    if cond.E != cb.D:
        raise DimMismatch(f"condition dim {cond.E} != codebook dim {cb.D}")
    valid = np.ones(len(frames), bool)
    n_valid = int(valid.sum())
    if args.r is not None:
        K = schedule_count(n_valid, cosine_ratio(args.r))
    else:
        if args.K < 0:
            raise RangeError("K", args.K)
        K = args.K
    prof = msd_sequence(emb, valid, cfg)
    s_dyn = dynamic_scores(prof, valid)
    s_sem = semantic_scores(emb, cond, valid)
    plan = cfs_select(s_dyn, s_sem, K, cfg, valid)
    tag = dict(zip(plan.positions, plan.provenance))
    lines = ["t,selected,provenance,s_dyn,s_sem"]
    for t in range(len(frames)):
        lines.append(f"{t},{int(t in tag)},{tag.get(t, '')},{fmt(s_dyn[t])},{fmt(s_sem[t])}")
    (args.out / "maskplan.csv").write_text("\n".join(lines) + "\n")
    write_manifest(args.out, "maskplan", cfg,
                   {"input": args.input, "condition": args.condition, "codebook": args.codebook},
                   {"K": K, "r": args.r})
    print(len(plan))
    return 0


def _read_corpus_dir(path: Path, cfg: Config):
    if not path.is_dir():
        raise InputError(f"{path}: corpus directory not found")
    files = sorted(p for p in path.iterdir() if p.suffix in (".csv", ".jsonl") and p.name != "conditions.csv")
    if not files:
        raise InputError(f"{path}: no motion files")
    frames = [read_motion(f) for f in files]
    D = frames[0].shape[1]
    for f, fr in zip(files, frames):
        if fr.shape[1] != D:
            raise InputError(f"{f}: expected {D} feature columns")
        if len(fr) < 2:
            raise InputError(f"{f}: need at least two frames")
    cond_path = path / "conditions.csv"
    if cond_path.exists():
        conds = read_matrix_csv(cond_path)
        if conds.shape != (len(files), D):
            raise InputError(f"{cond_path}: expected {len(files)} rows of {D} values")
    else:
        conds = rng_for(cfg.seed, "conditions").standard_normal((len(files), D))
    return frames, [TextCondition(c) for c in conds], {str(f): f for f in files}


def cmd_train(args, cfg: Config) -> int:
    if args.corpus is not None:
        frames, conds, inputs = _read_corpus_dir(args.corpus, cfg)
    else:
        corpus = synth_corpus(args.synth or TRAIN_RECIPE, args.n_seq, D_m=args.dims,
                              seed=int(rng_for(cfg.seed, "corpus").integers(2**31)), W=cfg.W)
        frames = [s.frames for s in corpus.sequences]
        conds, inputs = corpus.text_conditions, {}
    if max(len(f) for f in frames) > cfg.max_len:
        raise ConfigError(f"sequence longer than max_len={cfg.max_len}")
    if args.codebook is not None:
        cb = Codebook(read_matrix_csv(args.codebook))
        inputs["codebook"] = args.codebook
    else:
        cb = fit_codebook(np.concatenate(frames), args.vocab, iters=25,
                          seed=int(rng_for(cfg.seed, "codebook").integers(2**31)))
    if cb.D != frames[0].shape[1]:
        raise DimMismatch("codebook dim differs from feature dim")
    tokens = [quantize(f, cb) for f in frames]
    embs = [lookup_embeddings(z, cb) for z in tokens]
    model = ToyModel.init(cb.V, cb.D, cfg, rng_for(cfg.seed, "init"))
    model, curve = train(model, tokens, embs, conds, cfg, rng_for(cfg.seed, "training"),
                         strategy=args.strategy)
    save_checkpoint(args.out / "checkpoint", model, cb, cfg)
    lines = ["epoch,mean_loss"] + [f"{i + 1},{fmt(x)}" for i, x in enumerate(curve)]
    (args.out / "loss.csv").write_text("\n".join(lines) + "\n")
    write_manifest(args.out, "train", cfg, inputs,
                   {"synth": None if args.corpus else (args.synth or TRAIN_RECIPE),
                    "strategy": args.strategy, "vocab": cb.V})
    return 0


def cmd_generate(args, cfg: Config) -> int:
    model, cb = load_checkpoint(args.checkpoint)
    cond = TextCondition(read_vector(args.condition))
    if cond.E != model.E:
        raise DimMismatch(f"condition dim {cond.E} != model condition dim {model.E}")
    if not 1 <= args.length <= model.max_len:
        raise RangeError("length", args.length, f"1..{model.max_len}")
    final, trace = decode(model, cond, args.length, cfg, rng_for(cfg.seed, "decoding"), cb)
    write_matrix_csv(args.out / "tokens.csv", final.tokens[:, None], "t,token", index=True)
    write_matrix_csv(args.out / "embeddings.csv", lookup_embeddings(final, cb))
    with open(args.out / "trace.jsonl", "w") as fh:
        for rec in trace.steps:
            fh.write(json.dumps(rec.to_json(), sort_keys=True) + "\n")
    inputs = {"condition": args.condition, "checkpoint_params": args.checkpoint / "params.bin",
              "checkpoint_meta": args.checkpoint / "checkpoint.json"}
    write_manifest(args.out, "generate", cfg, inputs, {"length": args.length})
    return 0


def cmd_compare_signals(args, cfg: Config) -> int:
    corpus = synth_corpus(args.synth, args.n_seq, D_m=args.dims,
                          seed=int(rng_for(cfg.seed, "corpus").integers(2**31)), W=cfg.W)
    rows = signal_correlations(corpus, cfg)
    lines = ["signal,sequence,spearman"] + [f"{s},{i},{fmt(r)}" for s, i, r in rows]
    for sig in ("omega", "velocity"):
        mean = float(np.mean([r for s, _, r in rows if s == sig]))
        lines.append(f"{sig},mean,{fmt(mean)}")
        print(f"{sig}\t{mean:.4f}")
    (args.out / "compare_signals.csv").write_text("\n".join(lines) + "\n")
    write_manifest(args.out, "compare-signals", cfg, {}, {"synth": args.synth, "n_seq": args.n_seq})
    return 0


COMMANDS = {
    "analyze": cmd_analyze,
    "maskplan": cmd_maskplan,
    "train": cmd_train,
    "generate": cmd_generate,
    "compare-signals": cmd_compare_signals,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
    except (RangeError, UnknownKey, ConfigError, DynMaskError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        args.out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](args, cfg)
    except (ConfigError, RangeError, UnknownKey, DimMismatch) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (InputError, BadSpec, DegenerateLabels, DynMaskError, OSError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
