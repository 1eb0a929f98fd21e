"""Command-line front end: dataset generation, training, latent editing, eval.

Every command validates its inputs (paths, config, clip shapes) before any
output file is opened, so a failing invocation never leaves partial
artifacts. Exit codes: 0 success, 2 validation error, 3 numeric failure,
4 I/O error. Seeds are always echoed so runs can be reproduced exactly.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import evaluate, ops
from .codec import (
    MotionCodec,
    PROFILES,
    fine_tune,
    load_checkpoint,
    profile_config,
    save_checkpoint,
    train,
)
from .errors import (
    ConfigurationError,
    MotionCodesError,
    NumericError,
    ParseError,
)
from .features import assemble_features, disassemble_features
from .mqm import load_clip, save_clip
from .skeleton import window_dataset
from .synthetic import default_skeleton, generate_synthetic

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERIC = 3
EXIT_IO = 4


def _require_files(*paths):
    for path in paths:
        if path is not None and not os.path.exists(path):
            raise ConfigurationError(f"path does not exist: {path}")


def _load_run_config(path):
    """Config file: {"profile": name, "overrides": {field: value}}."""
    _require_files(path)
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"config file {path} is not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ParseError(f"config file {path} must hold a JSON object")
    if "profile" not in raw:
        raise ConfigurationError("config file is missing the key 'profile'")
    profile = raw.pop("profile")
    if profile not in PROFILES:
        raise ConfigurationError(
            f"unknown profile {profile!r}; choose from {sorted(PROFILES)}"
        )
    overrides = raw.pop("overrides", {})
    if raw:
        raise ConfigurationError(
            f"unknown config file keys: {sorted(raw)} (only 'profile' and 'overrides')"
        )
    if not isinstance(overrides, dict):
        raise ConfigurationError("'overrides' must be an object of config fields")
    return profile_config(profile, **overrides)


def _echo(args_seed, config=None):
    print(f"seed: {args_seed}")
    if config is not None:
        print("config: " + config.to_json())


def _load_manifest(data_dir):
    path = os.path.join(data_dir, "manifest.json")
    _require_files(path)
    with open(path, encoding="utf-8") as fh:
        try:
            manifest = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"manifest {path} is not valid JSON: {exc}") from None
    for key in ("clips", "styles", "unseen_styles"):
        if key not in manifest:
            raise ConfigurationError(f"manifest is missing the key {key!r}")
    return manifest


def _split_clips(data_dir, manifest, splits):
    clips = []
    for entry in manifest["clips"]:
        if entry["split"] in splits:
            clips.append(load_clip(os.path.join(data_dir, entry["file"])))
    if not clips:
        raise ConfigurationError(f"no clips in split(s) {sorted(splits)}")
    return clips


def _windows_of(clips, window, stride):
    wins = window_dataset(clips, window, stride)
    if not wins:
        raise ConfigurationError(
            f"no windows of {window} frames (stride {stride}) fit the selected clips"
        )
    feats = np.stack([assemble_features(w) for w in wins])
    labels = np.array([w.style_label or "" for w in wins])
    return feats, labels


def cmd_gen_synth(args):
    unseen = set(args.unseen_styles)
    bad = unseen - set(args.styles)
    if bad:
        raise ConfigurationError(f"unseen styles {sorted(bad)} not in --styles")
    if args.frames < 1 or args.clips_per_pair < 1:
        raise ConfigurationError("--frames and --clips-per-pair must be >= 1")
    for style in args.styles:
        if style < 0:
            raise ConfigurationError(f"style ids must be >= 0, got {style}")
    _echo(args.seed)
    os.makedirs(args.out_dir, exist_ok=True)
    test_count = args.clips_per_pair // 4
    entries = []
    for content in args.contents:
        for style in args.styles:
            for i in range(args.clips_per_pair):
                clip = generate_synthetic(content, style, args.frames,
                                          fps=args.fps, seed=args.seed + i)
                name = f"c{content}_s{style}_{i:03d}.mqm"
                save_clip(clip, os.path.join(args.out_dir, name))
                if style in unseen:
                    split = "unseen"
                else:
                    split = "test" if i >= args.clips_per_pair - test_count else "train"
                entries.append({
                    "file": name, "content": content, "style": style,
                    "style_label": clip.style_label, "split": split,
                })
    manifest = {
        "seed": args.seed, "fps": args.fps, "frames": args.frames,
        "contents": list(args.contents), "styles": list(args.styles),
        "unseen_styles": sorted(unseen), "clips": entries,
    }
    with open(os.path.join(args.out_dir, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"wrote {len(entries)} clips + manifest to {args.out_dir}")
    return EXIT_OK


def _run_training(model, args, fresh_report_log):
    manifest = _load_manifest(args.data)
    clips = _split_clips(args.data, manifest, {"train"})
    feats, labels = _windows_of(clips, model.config.window, args.stride)
    _echo(model.config.seed, model.config)
    print(f"training on {feats.shape[0]} windows from {len(clips)} clips")

    log_handle = None
    if args.log:
        log_handle = open(args.log, "w" if fresh_report_log else "a", encoding="utf-8")
    try:
        def on_report(report):
            line = json.dumps(report, sort_keys=True)
            if log_handle:
                log_handle.write(line + "\n")
                log_handle.flush()
            if report["step"] % args.print_every == 0:
                total = report["losses"]["total"]
                print(f"step {report['step']}: total {total:.6f} "
                      f"(n={report['n_layers']})")
            if args.checkpoint_every and report["step"] % args.checkpoint_every == 0:
                save_checkpoint(model, args.out)

        train(model, feats, labels, args.steps, on_report=on_report)
    finally:
        if log_handle:
            log_handle.close()
    save_checkpoint(model, args.out)
    print(f"saved checkpoint to {args.out}")
    return EXIT_OK


def cmd_train(args):
    config = _load_run_config(args.config)
    model = MotionCodec.create(config, default_skeleton())
    return _run_training(model, args, fresh_report_log=True)


def cmd_resume(args):
    _require_files(args.checkpoint)
    model = load_checkpoint(args.checkpoint)
    return _run_training(model, args, fresh_report_log=False)


def _load_model(args):
    _require_files(args.checkpoint)
    return load_checkpoint(args.checkpoint)


def cmd_reconstruct(args):
    model = _load_model(args)
    clip = load_clip(args.input)
    feats = model.reconstruct_features(assemble_features(clip)[None], args.books)
    out = disassemble_features(feats[0], model.skeleton, clip.fps,
                               style_label=clip.style_label)
    save_clip(out, args.out)
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_transfer(args):
    model = _load_model(args)
    content = load_clip(args.content)
    style = load_clip(args.style)
    out = ops.code_swap_transfer(model, content, style, s=args.s)
    save_clip(out, args.out)
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_extract(args):
    model = _load_model(args)
    out = ops.content_extract(model, load_clip(args.input), s=args.s)
    save_clip(out, args.out)
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_interpolate(args):
    model = _load_model(args)
    out = ops.style_interpolation(model, load_clip(args.input), args.alpha, s=args.s)
    save_clip(out, args.out)
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_invert(args):
    model = _load_model(args)
    out = ops.style_inversion(model, load_clip(args.input), s=args.s)
    save_clip(out, args.out)
    print(f"wrote {args.out}")
    return EXIT_OK


def _load_script(path, base_dir):
    _require_files(path)
    with open(path, encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"script {path} is not valid JSON: {exc}") from None
    if not isinstance(raw, dict) or "segments" not in raw:
        raise ParseError(f"script {path} must hold an object with 'segments'")
    segments = []
    for i, seg in enumerate(raw["segments"]):
        for key in ("style", "start", "stop"):
            if key not in seg:
                raise ParseError(f"script segment {i} is missing {key!r}")
        style_path = seg["style"]
        if not os.path.isabs(style_path):
            style_path = os.path.join(base_dir, style_path)
        _require_files(style_path)
        segments.append(ops.TransitionSegment(
            load_clip(style_path), int(seg["start"]), int(seg["stop"])
        ))
    return ops.TransitionScript(segments)


def cmd_transition(args):
    model = _load_model(args)
    content = load_clip(args.content)
    script = _load_script(args.script, os.path.dirname(os.path.abspath(args.script)))
    out = ops.style_transition(model, content, script, s=args.s)
    save_clip(out, args.out)
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_blend(args):
    model = _load_model(args)
    out = ops.motion_blend(model, load_clip(args.first), load_clip(args.second))
    save_clip(out, args.out)
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_augment(args):
    model = _load_model(args)
    _echo(args.seed)
    out = ops.random_style_augmentation(
        model, load_clip(args.content), args.seed, args.segment_len, s=args.s
    )
    save_clip(out, args.out)
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_content_interp(args):
    model = _load_model(args)
    out = ops.content_interpolation(
        model, load_clip(args.first), load_clip(args.second), args.beta,
        s=args.s, style_from=args.style_from,
    )
    save_clip(out, args.out)
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_train_classifier(args):
    manifest = _load_manifest(args.data)
    splits = {"train", "test", "unseen"} if args.split == "all" else {args.split}
    clips = _split_clips(args.data, manifest, splits)
    feats, labels = _windows_of(clips, args.window, args.stride)
    _echo(args.seed)
    config = evaluate.ClassifierConfig(
        steps=args.steps, batch_size=args.batch_size, seed=args.seed,
        learning_rate=args.learning_rate,
    )
    clf = evaluate.train_classifier(feats, labels, config)
    evaluate.save_classifier(clf, args.out)
    print(f"held-out accuracy: {clf.heldout_accuracy:.2f}%")
    print(f"saved classifier to {args.out}")
    return EXIT_OK


def cmd_eval(args):
    model = _load_model(args)
    _require_files(args.classifier)
    classifier = evaluate.load_classifier(args.classifier)
    manifest = _load_manifest(args.data)
    contents = _split_clips(args.data, manifest, {args.split})
    if args.limit:
        contents = contents[: args.limit]
    _echo(args.seed)

    # one style exemplar per label, drawn from the evaluation split itself
    exemplars = {}
    for clip in contents:
        exemplars.setdefault(clip.style_label, clip)

    transfers, targets, content_labels, deviations_by_label = [], [], [], {}
    deviations = []
    for content in contents:
        for label, style_clip in sorted(exemplars.items()):
            if label == content.style_label:
                continue
            moved = ops.code_swap_transfer(model, content, style_clip, s=args.s)
            transfers.append(moved)
            targets.append(label)
            content_labels.append(content.style_label)
            dev = evaluate.content_deviation(moved, content)
            deviations.append(dev)
            deviations_by_label.setdefault(label, []).append(dev)
    if not transfers:
        raise ConfigurationError(
            "evaluation needs at least two distinct styles in the split"
        )

    top1, topk = evaluate.style_accuracy(classifier, transfers, targets, k=args.k)
    cross = evaluate.cross_classification(classifier, transfers, content_labels)
    l2p = evaluate.reconstruction_l2p(model, contents)
    per_style = evaluate.per_style_report(deviations_by_label)
    report = evaluate.EvalReport(
        style_acc_top1=top1, style_acc_topk=topk, topk=args.k,
        content_dev_mean=float(np.mean(deviations)),
        content_dev_std=float(np.std(deviations)),
        cross_cls=cross, rec_err_l2p=l2p,
        per_style=[(row[0], row[1]) for row in per_style.rows],
    )
    text = report.to_json()
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(text + "\n")
    print(text)
    print(f"wrote report to {args.out}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="motioncodes",
        description="Residual-quantized motion codec: train, edit styles in "
                    "latent space, evaluate transfers.",
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.set_defaults(func=func)
        return p

    p = add("gen-synth", cmd_gen_synth, "Generate a labeled synthetic gait dataset")
    p.add_argument("out_dir", help="directory for the clip files and manifest")
    p.add_argument("--contents", type=int, nargs="+", default=[0, 1, 2, 3],
                   help="content ids to generate")
    p.add_argument("--styles", type=int, nargs="+", default=[0, 1, 2, 3],
                   help="style ids to generate")
    p.add_argument("--unseen-styles", type=int, nargs="*", default=[],
                   help="styles held out of train and test entirely")
    p.add_argument("--clips-per-pair", type=int, default=10,
                   help="clips per (content, style) pair")
    p.add_argument("--frames", type=int, default=240, help="frames per clip")
    p.add_argument("--fps", type=float, default=30.0, help="frame rate")
    p.add_argument("--seed", type=int, default=0, help="generator seed (echoed)")

    for name, func, helptext in (
        ("train", cmd_train, "Train a codec from a config file"),
        ("resume", cmd_resume, "Continue training from a checkpoint"),
    ):
        p = add(name, func, helptext)
        if name == "train":
            p.add_argument("--config", required=True,
                           help="JSON config: profile name plus overrides")
        else:
            p.add_argument("--checkpoint", required=True,
                           help="checkpoint file to resume from")
        p.add_argument("--data", required=True, help="dataset directory with manifest")
        p.add_argument("--out", required=True, help="checkpoint output path")
        p.add_argument("--steps", type=int, required=True, help="training steps to run")
        p.add_argument("--stride", type=int, default=32,
                       help="window stride over the training clips")
        p.add_argument("--log", default=None,
                       help="per-step report log (JSON lines)")
        p.add_argument("--checkpoint-every", type=int, default=0,
                       help="also checkpoint every N steps (0 = only at the end)")
        p.add_argument("--print-every", type=int, default=10,
                       help="console progress interval")

    p = add("reconstruct", cmd_reconstruct, "Encode and decode one clip")
    p.add_argument("--checkpoint", required=True, help="trained codec checkpoint")
    p.add_argument("--input", required=True, help="input clip file")
    p.add_argument("--out", required=True, help="output clip file")
    p.add_argument("--books", type=int, default=None,
                   help="decode with only the first N codebooks")

    p = add("transfer", cmd_transfer, "Replace a clip's style codes with another's")
    p.add_argument("--checkpoint", required=True, help="trained codec checkpoint")
    p.add_argument("--content", required=True, help="content clip file")
    p.add_argument("--style", required=True, help="style clip file")
    p.add_argument("--s", type=int, default=None,
                   help="content book count (default: model setting)")
    p.add_argument("--out", required=True, help="output clip file")

    p = add("extract", cmd_extract, "Decode only the content books")
    p.add_argument("--checkpoint", required=True, help="trained codec checkpoint")
    p.add_argument("--input", required=True, help="input clip file")
    p.add_argument("--s", type=int, default=None,
                   help="content book count (default: model setting)")
    p.add_argument("--out", required=True, help="output clip file")

    p = add("interpolate", cmd_interpolate, "Scale the style codes by alpha")
    p.add_argument("--checkpoint", required=True, help="trained codec checkpoint")
    p.add_argument("--input", required=True, help="input clip file")
    p.add_argument("--alpha", type=float, required=True,
                   help="style scale; 0 extracts content, 1 reconstructs")
    p.add_argument("--s", type=int, default=None,
                   help="content book count (default: model setting)")
    p.add_argument("--out", required=True, help="output clip file")

    p = add("invert", cmd_invert, "Subtract the style codes (alpha = -1)")
    p.add_argument("--checkpoint", required=True, help="trained codec checkpoint")
    p.add_argument("--input", required=True, help="input clip file")
    p.add_argument("--s", type=int, default=None,
                   help="content book count (default: model setting)")
    p.add_argument("--out", required=True, help="output clip file")

    p = add("transition", cmd_transition, "Per-segment style codes from a script file")
    p.add_argument("--checkpoint", required=True, help="trained codec checkpoint")
    p.add_argument("--content", required=True, help="content clip file")
    p.add_argument("--script", required=True,
                   help="JSON script: segments of style file + slot span")
    p.add_argument("--s", type=int, default=None,
                   help="content book count (default: model setting)")
    p.add_argument("--out", required=True, help="output clip file")

    p = add("blend", cmd_blend, "Concatenate two clips in latent space")
    p.add_argument("--checkpoint", required=True, help="trained codec checkpoint")
    p.add_argument("--first", required=True, help="first clip file")
    p.add_argument("--second", required=True, help="second clip file")
    p.add_argument("--out", required=True, help="output clip file")

    p = add("augment", cmd_augment, "Randomize style codes segment by segment")
    p.add_argument("--checkpoint", required=True, help="trained codec checkpoint")
    p.add_argument("--content", required=True, help="content clip file")
    p.add_argument("--seed", type=int, default=0, help="draw seed (echoed)")
    p.add_argument("--segment-len", type=int, default=4,
                   help="slots per random style segment")
    p.add_argument("--s", type=int, default=None,
                   help="content book count (default: model setting)")
    p.add_argument("--out", required=True, help="output clip file")

    p = add("content-interp", cmd_content_interp, "Blend the content codes of two clips")
    p.add_argument("--checkpoint", required=True, help="trained codec checkpoint")
    p.add_argument("--first", required=True, help="first clip file")
    p.add_argument("--second", required=True, help="second clip file")
    p.add_argument("--beta", type=float, required=True,
                   help="content mix: 0 keeps the first clip, 1 the second")
    p.add_argument("--style-from", choices=("a", "b"), default="a",
                   help="which clip supplies the style codes")
    p.add_argument("--s", type=int, default=None,
                   help="content book count (default: model setting)")
    p.add_argument("--out", required=True, help="output clip file")

    p = add("train-classifier", cmd_train_classifier,
            "Fit the style classifier used by eval")
    p.add_argument("--data", required=True, help="dataset directory with manifest")
    p.add_argument("--out", required=True, help="classifier output path")
    p.add_argument("--split", choices=("all", "train", "test", "unseen"),
                   default="all", help="which split(s) to train on")
    p.add_argument("--window", type=int, default=64, help="window length in frames")
    p.add_argument("--stride", type=int, default=32, help="window stride")
    p.add_argument("--steps", type=int, default=300, help="training steps")
    p.add_argument("--batch-size", type=int, default=32, help="windows per batch")
    p.add_argument("--learning-rate", type=float, default=1e-3, help="Adam step size")
    p.add_argument("--seed", type=int, default=0, help="training seed (echoed)")

    p = add("eval", cmd_eval, "Transfer metrics over one dataset split")
    p.add_argument("--checkpoint", required=True, help="trained codec checkpoint")
    p.add_argument("--classifier", required=True, help="trained classifier file")
    p.add_argument("--data", required=True, help="dataset directory with manifest")
    p.add_argument("--split", choices=("train", "test", "unseen"), default="test",
                   help="content clips to evaluate on")
    p.add_argument("--k", type=int, default=3, help="top-k for style accuracy")
    p.add_argument("--s", type=int, default=None,
                   help="content book count (default: model setting)")
    p.add_argument("--limit", type=int, default=0,
                   help="cap the number of content clips (0 = all)")
    p.add_argument("--seed", type=int, default=0, help="run seed (echoed)")
    p.add_argument("--out", required=True, help="report output path (JSON)")

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except MotionCodesError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
