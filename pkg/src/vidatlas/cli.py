"""Command-line front end for reproducible runs.

Heavy imports happen inside the subcommands so --threads can cap the BLAS
worker pools before numpy loads. Every run that produces files writes a
run_manifest.txt next to them with the fully resolved settings.
"""

import argparse
import os
import sys
from dataclasses import fields


def _lazy():
    from . import atlasops, data, evalprop, gradcheck, losses, model, train

    return atlasops, data, evalprop, gradcheck, losses, model, train


def _fail(message):
    print(f"error: {message}", file=sys.stderr)
    return 2


def write_manifest(directory, subcommand, args, extras=None):
    from . import __version__

    os.makedirs(directory, exist_ok=True)
    path = os.path.join(directory, "run_manifest.txt")
    with open(path, "w") as f:
        f.write(f"subcommand = {subcommand}\n")
        f.write(f"version = {__version__}\n")
        skip = {"func"}
        for key in sorted(vars(args)):
            if key in skip:
                continue
            f.write(f"{key} = {getattr(args, key)}\n")
        for key, value in (extras or {}).items():
            f.write(f"{key} = {value}\n")
    return path


# ---------------------------------------------------------------------------
# synth


def _parse_synth_spec(path):
    import configparser

    from .data import SynthSpec
    from .errors import ConfigError

    text = open(path).read()
    if not text.lstrip().startswith("["):
        text = "[synth]\n" + text
    parser = configparser.ConfigParser()
    parser.read_string(text)
    section = parser["synth"] if parser.has_section("synth") else parser[parser.sections()[0]]
    kwargs = {}
    defaults = SynthSpec()
    for key, value in section.items():
        if not hasattr(defaults, key):
            raise ConfigError(f"unknown synth key {key!r}")
        current = getattr(defaults, key)
        if key == "occluder":
            text = value.strip().lower()
            kwargs[key] = None if text in ("", "none") else tuple(
                float(tok) for tok in value.replace("(", "").replace(")", "").split(",")
            )
        elif isinstance(current, bool):
            kwargs[key] = value.strip().lower() in ("1", "true", "yes", "on")
        elif isinstance(current, int):
            kwargs[key] = int(value)
        elif isinstance(current, tuple):
            kwargs[key] = tuple(float(tok) for tok in value.replace("(", "").replace(")", "").split(","))
        elif isinstance(current, float):
            kwargs[key] = float(value)
        else:
            kwargs[key] = value.strip()
    return SynthSpec(**kwargs)


def cmd_synth(args):
    _, data, _, _, _, _, _ = _lazy()
    if not os.path.isfile(args.spec):
        return _fail(f"synth spec file not found: {args.spec}")
    spec = _parse_synth_spec(args.spec)
    dataset = data.synth_dataset(spec)
    data.save_dataset(dataset, args.out)
    write_manifest(args.out, "synth", args, {"seed": spec.seed})
    print(f"wrote synthetic dataset ({spec.frames} frames {spec.width}x{spec.height}) to {args.out}")
    return 0


# ---------------------------------------------------------------------------
# train


def _apply_overrides(cfg, args):
    from dataclasses import replace

    from . import losses, train

    updates = {}
    for f in fields(train.TrainConfig):
        if f.name == "weights":
            continue
        value = getattr(args, f.name, None)
        if value is not None:
            updates[f.name] = value
    w_updates = {}
    for f in fields(losses.LossWeights):
        value = getattr(args, f"loss_{f.name}", None)
        if value is not None:
            w_updates[f.name] = value
    if args.no_rigid:
        w_updates["enable_rigid"] = False
        w_updates["enable_global_rigid"] = False
    if args.no_flow:
        w_updates["enable_flow"] = False
    if args.no_sparsity:
        w_updates["enable_sparsity"] = False
    weights = replace(cfg.weights, **w_updates)
    return replace(cfg, weights=weights, **updates)


def cmd_train(args):
    _, data, _, _, _, _, train = _lazy()
    if not os.path.isdir(args.data):
        return _fail(f"data directory not found: {args.data}")
    if args.config:
        if not os.path.isfile(args.config):
            return _fail(f"config file not found: {args.config}")
        cfg = train.config_from_file(args.config)
    else:
        cfg = train.TrainConfig()
    cfg = _apply_overrides(cfg, args)
    video, flow, masks, scribbles = data.load_dataset(args.data)
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "resolved_config.cfg"), "w") as f:
        f.write(train.config_to_text(cfg))
    write_manifest(args.out, "train", args, {"resolved_config": "resolved_config.cfg"})

    def progress(iteration, total, breakdown):
        print(f"iter {iteration}: total {total:.4f}", flush=True)

    train.fit(video, flow, masks, scribbles, cfg, out_dir=args.out,
              resume=args.resume, progress=progress if args.verbose else None)
    print(f"training finished; checkpoint at {os.path.join(args.out, 'checkpoint.lnat')}")
    return 0


# ---------------------------------------------------------------------------
# model consumers


def _load_model(path):
    from . import train

    if not os.path.isfile(path):
        raise FileNotFoundError(f"checkpoint not found: {path}")
    return train.load_checkpoint(path)


def cmd_render_atlas(args):
    atlasops, _, _, _, _, _, _ = _lazy()
    try:
        ckpt = _load_model(args.ckpt)
    except FileNotFoundError as exc:
        return _fail(str(exc))
    image = atlasops.render_atlas(ckpt.model, args.layer, resolution=args.res)
    out_dir = os.path.dirname(os.path.abspath(args.out)) or "."
    os.makedirs(out_dir, exist_ok=True)
    atlasops.save_atlas_image(image, args.out)
    write_manifest(out_dir, "render-atlas", args)
    print(f"wrote layer {args.layer} atlas ({args.res}x{args.res}) to {args.out}")
    return 0


def cmd_reconstruct(args):
    atlasops, data, _, _, _, _, _ = _lazy()
    try:
        ckpt = _load_model(args.ckpt)
    except FileNotFoundError as exc:
        return _fail(str(exc))
    video = atlasops.reconstruct_video(ckpt.model)
    data.save_video(video, args.out)
    write_manifest(args.out, "reconstruct", args)
    print(f"wrote {video.T} reconstructed frames to {args.out}")
    return 0


def cmd_eval_psnr(args):
    atlasops, data, evalprop, _, _, _, _ = _lazy()
    try:
        ckpt = _load_model(args.ckpt)
    except FileNotFoundError as exc:
        return _fail(str(exc))
    if not os.path.isdir(args.data):
        return _fail(f"data directory not found: {args.data}")
    video, _, _, _ = data.load_dataset(args.data)
    recon = atlasops.reconstruct_video(ckpt.model, dims=video.dims)
    report = evalprop.MetricReport(psnr_db=evalprop.psnr(video, recon))
    text = report.to_text()
    print(text, end="")
    if args.out:
        out_dir = os.path.dirname(os.path.abspath(args.out)) or "."
        os.makedirs(out_dir, exist_ok=True)
        with open(args.out, "w") as f:
            f.write(text)
        write_manifest(out_dir, "eval-psnr", args)
    return 0


def cmd_apply_edit(args):
    atlasops, data, _, _, _, _, _ = _lazy()
    try:
        ckpt = _load_model(args.ckpt)
    except FileNotFoundError as exc:
        return _fail(str(exc))
    if not os.path.isdir(args.data):
        return _fail(f"data directory not found: {args.data}")
    video, _, _, _ = data.load_dataset(args.data)
    edits = []
    for path in args.edit:
        if not os.path.isfile(path):
            return _fail(f"edit image not found: {path}")
        edits.append(atlasops.load_edit(path))
    edited = atlasops.apply_edit(ckpt.model, video, edits)
    data.save_video(edited, args.out)
    write_manifest(args.out, "apply-edit", args)
    print(f"wrote {edited.T} edited frames to {args.out}")
    return 0


def cmd_project_frame_edit(args):
    atlasops, data, _, _, _, _, _ = _lazy()
    try:
        ckpt = _load_model(args.ckpt)
    except FileNotFoundError as exc:
        return _fail(str(exc))
    if not os.path.isfile(args.edit):
        return _fail(f"edit image not found: {args.edit}")
    rgba = data.load_rgba(args.edit)
    edit = atlasops.EditLayer(rgba=rgba, kind="frame", frame=args.frame)
    outputs = atlasops.project_frame_edit(ckpt.model, args.frame, edit, resolution=args.res)
    os.makedirs(args.out, exist_ok=True)
    for layer, atlas_edit in outputs.items():
        atlasops.save_edit(atlas_edit, os.path.join(args.out, f"edit_layer{layer}.png"))
    write_manifest(args.out, "project-frame-edit", args, {"layers": sorted(outputs)})
    print(f"projected edit onto layers {sorted(outputs)} in {args.out}")
    return 0


def cmd_flow_baseline(args):
    atlasops, data, evalprop, _, _, _, _ = _lazy()
    if not os.path.isdir(args.data):
        return _fail(f"data directory not found: {args.data}")
    if not os.path.isfile(args.edit):
        return _fail(f"edit image not found: {args.edit}")
    video, flow, _, _ = data.load_dataset(args.data)
    rgba = data.load_rgba(args.edit)
    frames = evalprop.flow_baseline_propagate(rgba, flow)
    os.makedirs(args.out, exist_ok=True)
    for t, frame in enumerate(frames):
        data.save_image(frame, os.path.join(args.out, f"{t:05d}.png"))
    write_manifest(args.out, "flow-baseline", args)
    print(f"wrote {len(frames)} propagated edit frames to {args.out}")
    return 0


def cmd_check_grad(args):
    _, _, _, gradcheck, _, _, _ = _lazy()

    def progress(term, err):
        print(f"{term:20s} max rel err = {err:.3e}", flush=True)

    results = gradcheck.gradient_suite(
        seed=args.seed, n_configs=args.configs, params_per_config=args.params, progress=progress
    )
    worst = max(results.values())
    ok = worst < 1e-6
    print(f"worst over all terms: {worst:.3e} ({'PASS' if ok else 'FAIL'} at 1e-6)")
    return 0 if ok else 1


# ---------------------------------------------------------------------------
# parser


def _add_train_flags(sub):
    from . import losses, train

    for f in fields(train.TrainConfig):
        if f.name == "weights":
            continue
        flag = "--" + f.name.replace("_", "-")
        if f.type == "bool" or isinstance(f.default, bool):
            sub.add_argument(flag, dest=f.name, default=None, action=argparse.BooleanOptionalAction)
        elif isinstance(f.default, int):
            sub.add_argument(flag, dest=f.name, type=int, default=None)
        elif isinstance(f.default, float):
            sub.add_argument(flag, dest=f.name, type=float, default=None)
        else:
            sub.add_argument(flag, dest=f.name, type=str, default=None)
    for f in fields(losses.LossWeights):
        flag = "--loss-" + f.name.replace("_", "-")
        if isinstance(f.default, bool):
            sub.add_argument(flag, dest=f"loss_{f.name}", default=None, action=argparse.BooleanOptionalAction)
        else:
            sub.add_argument(flag, dest=f"loss_{f.name}", type=float, default=None)
    sub.add_argument("--no-rigid", action="store_true", help="disable the rigidity terms")
    sub.add_argument("--no-flow", action="store_true", help="disable the optical-flow terms")
    sub.add_argument("--no-sparsity", action="store_true", help="disable the sparsity term")
    sub.add_argument("--resume", default=None, help="checkpoint to resume from")
    sub.add_argument("--verbose", action="store_true", help="print loss lines while training")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="vidatlas",
        description="Layered neural atlas decomposition and editing of short videos.",
    )
    parser.add_argument("--threads", type=int, default=None, help="cap BLAS worker threads")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset with ground truth")
    p.add_argument("--spec", required=True, help="synth spec file (key = value lines)")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="optimize a model on a dataset directory")
    p.add_argument("--config", default=None, help="config file; flags override its values")
    p.add_argument("--data", required=True, help="dataset directory (frames/, flow/, masks/)")
    p.add_argument("--out", required=True, help="output directory for logs and checkpoints")
    _add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("render-atlas", help="discretize one layer's atlas to an RGBA image")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--layer", type=int, required=True)
    p.add_argument("--res", type=int, default=1000)
    p.add_argument("--out", required=True, help="output image path")
    p.set_defaults(func=cmd_render_atlas)

    p = sub.add_parser("reconstruct", help="reconstruct the video from a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--out", required=True, help="output frame directory")
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("eval-psnr", help="reconstruction PSNR against the input frames")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", default=None, help="optional metric report file")
    p.set_defaults(func=cmd_eval_psnr)

    p = sub.add_parser("apply-edit", help="map atlas edits back onto the video")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True, help="dataset directory with the original frames")
    p.add_argument("--edit", required=True, nargs="+", help="edit image(s) with .reg sidecars")
    p.add_argument("--out", required=True, help="output frame directory")
    p.set_defaults(func=cmd_apply_edit)

    p = sub.add_parser("project-frame-edit", help="project a frame edit into atlas space")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--frame", type=int, required=True)
    p.add_argument("--edit", required=True, help="RGBA edit image registered to the frame")
    p.add_argument("--res", type=int, default=1000)
    p.add_argument("--out", required=True, help="output directory for per-layer atlas edits")
    p.set_defaults(func=cmd_project_frame_edit)

    p = sub.add_parser("flow-baseline", help="propagate a frame-0 edit by chaining optical flow")
    p.add_argument("--data", required=True)
    p.add_argument("--edit", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_flow_baseline)

    p = sub.add_parser("check-grad", help="finite-difference check of every loss gradient")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--configs", type=int, default=50)
    p.add_argument("--params", type=int, default=15, help="probed parameters per network per config")
    p.set_defaults(func=cmd_check_grad)

    return parser


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    # honor --threads before anything imports numpy (BLAS pools spin up then)
    if "--threads" in argv:
        i = argv.index("--threads")
        if i + 1 < len(argv):
            for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
                os.environ[var] = argv[i + 1]
    args = build_parser().parse_args(argv)
    from .errors import VidatlasError

    try:
        return args.func(args)
    except VidatlasError as exc:
        return _fail(str(exc))


if __name__ == "__main__":
    sys.exit(main())
