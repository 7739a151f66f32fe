"""Command-line interface.

Every command accepts ``--config`` (a TOML file), ``--seed`` and ``--out``.
A ``[<command>]`` section of the config file supplies flag defaults and
``[run] seed`` the default seed. Exit status is 0 on success, 2 for usage
or validation errors and 1 for runtime failures.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import container
from .errors import ConfigMismatchError, DegenerateDataError, FormatError, UndefinedMetricError

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _parse_value(text: str):
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    if text.lower() in ("true", "false"):
        return text.lower() == "true"
    return text


def _params(pairs) -> dict:
    out = {}
    for p in pairs or ():
        if "=" not in p:
            raise ValueError(f"--param expects key=value, got {p!r}")
        k, v = p.split("=", 1)
        out[k.strip().replace("-", "_")] = _parse_value(v.strip())
    return out


def _floats(text) -> list:
    if isinstance(text, (list, tuple)):
        return [float(t) for t in text]
    return [float(t) for t in str(text).split(",") if t.strip()]


def _config_hash(args):
    """Hash that loaded artifacts must carry; only enforced under ``--config``."""
    return getattr(args, "_check_hash", None)


def _meta(args, **extra):
    return {**extra, "config_hash": args._config_hash}


def _out_dir(args, default="out") -> Path:
    out = Path(args.out or default)
    out.mkdir(parents=True, exist_ok=True)
    return out


# -- commands ----------------------------------------------------------------


def cmd_gen_synthetic(args):
    from .synthetic import CLASSES, SyntheticSpec, generate_synthetic_corpus

    classes = tuple(c.strip() for c in args.classes.split(",")) if args.classes else CLASSES
    spec = SyntheticSpec(classes=classes, images_per_class=args.n, size=args.size,
                         seed=args.seed, n_splits=args.splits)
    manifest = generate_synthetic_corpus(spec, _out_dir(args, "synthetic"), args.attribute_labels)
    print(f"{len(manifest)} images written to {manifest.root}")


def _image_list(args):
    from .dataset import read_manifest

    if args.manifest:
        m = read_manifest(args.manifest)
        return [str(m.resolve(e)) for e in m.entries], m.paths
    if not args.images:
        raise ValueError("give images or --manifest")
    return list(args.images), [Path(p).name for p in args.images]


def cmd_extract(args):
    from .dataset import load_image
    from .descriptors import extract, needs_rgb, write_descriptors

    params = _params(args.param)
    files, names = _image_list(args)
    out = _out_dir(args, "descriptors")
    mode = "rgb" if needs_rgb(args.kind) else "gray"
    written = []
    for k, (path, name) in enumerate(zip(files, names)):
        ds = extract(load_image(path, mode), args.kind, **params)
        target = f"{k:05d}_{Path(name).stem}.desc"
        write_descriptors(ds, out / target)
        written.append(target)
    index = {"kind": args.kind, "params": params, "files": written, "items": names}
    (out / "descriptors.json").write_text(json.dumps(index, indent=2) + "\n", encoding="utf-8")
    print(f"{len(written)} descriptor files in {out}")


def _read_descriptor_index(path):
    from .descriptors import read_descriptors

    d = Path(path)
    index = json.loads((d / "descriptors.json").read_text(encoding="utf-8"))
    sets = [read_descriptors(d / f) for f in index["files"]]
    return index, sets


def cmd_train_codebook(args):
    from .encoders import train_kmeans
    from .features import pool_descriptors

    index, sets = _read_descriptor_index(args.descriptors)
    X = pool_descriptors(sets, args.max_descriptors, args.seed)
    cb = train_kmeans(X, args.K, seed=args.seed, kind=index["kind"])
    out = Path(args.out or "codebook.bin")
    cb.save(out, _meta(args, descriptor=index["kind"], params=index["params"]))
    print(f"codebook K={cb.K} dim={cb.dim} -> {out}")


def cmd_train_gmm(args):
    from .encoders import train_gmm, train_pca
    from .features import pool_descriptors

    index, sets = _read_descriptor_index(args.descriptors)
    X = pool_descriptors(sets, args.max_descriptors, args.seed)
    pca = None
    if args.pca and args.pca < X.shape[1]:
        pca = train_pca(X, args.pca)
        X = pca.project(X)
    gmm = train_gmm(X, args.K, seed=args.seed, max_iter=args.max_iter)
    out = Path(args.out or "gmm.bin")
    gmm.save(out, _meta(args, descriptor=index["kind"], params=index["params"]), pca=pca)
    print(f"gmm K={gmm.K} dim={gmm.dim} -> {out}")


def _load_vocab(path, config_hash):
    from .encoders import Codebook, GmmModel

    tag, meta, _ = container.load(path, None, config_hash)
    if tag == "codebook":
        return Codebook.load(path), None, meta
    if tag == "gmm":
        gmm, pca = GmmModel.load(path)
        return gmm, pca, meta
    raise FormatError(f"{path} holds a {tag!r}, not a vocabulary")


def cmd_encode(args):
    from .encoders import GmmModel
    from .features import FeatureRecipe

    index, sets = _read_descriptor_index(args.descriptors)
    vocab, pca, vmeta = _load_vocab(args.vocab, _config_hash(args))
    encoding = args.encoding or ("ifv" if isinstance(vocab, GmmModel) else "bovw")
    if vmeta.get("descriptor") not in (None, index["kind"]):
        raise ValueError(f"vocabulary was trained on {vmeta['descriptor']!r} descriptors, "
                         f"these are {index['kind']!r}")
    recipe = FeatureRecipe(index["kind"], encoding, vocab, pca, index["params"])
    F = np.vstack([recipe.encode_descriptors(ds).values for ds in sets])
    rmeta, rarrays = recipe.to_container("recipe_")
    out = Path(args.out or "features.bin")
    container.save(out, "features", _meta(args, items=index["items"], recipe=rmeta),
                   {"features": F, **rarrays})
    print(f"{F.shape[0]} x {F.shape[1]} {encoding} features -> {out}")


def _load_features(path, config_hash=None):
    from .features import FeatureRecipe

    _, meta, arrays = container.load(path, "features", config_hash)
    recipe = FeatureRecipe.from_container(meta["recipe"], arrays, "recipe_")
    return arrays["features"], meta["items"], recipe


def _aligned_labels(manifest_path, items):
    from .dataset import read_manifest

    m = read_manifest(manifest_path)
    index = {p: k for k, p in enumerate(m.paths)}
    index.update({Path(p).name: k for k, p in enumerate(m.paths)})
    try:
        rows = [index[it] for it in items]
    except KeyError as exc:
        raise ValueError(f"feature item {exc} is not in the manifest") from None
    return m, m.label_matrix()[rows].astype(bool), rows


def cmd_train(args):
    from .attributes import VOCABULARY, WORD_INDEX, train_attribute_bank
    from .dataset import make_stratified_splits
    from .evaluation import average_precision
    from .learn import KernelSpec, fit_spec, kernel_matrix, train_svm

    F, items, recipe = _load_features(args.features, _config_hash(args))
    manifest, Y, _ = _aligned_labels(args.manifest, items)
    words = list(manifest.vocabulary)
    if all(w in WORD_INDEX for w in words):
        order = sorted(range(len(words)), key=lambda k: WORD_INDEX[words[k]])
        words = [words[k] for k in order]
        Y = Y[:, order]
    keep = [q for q in range(len(words)) if 0 < Y[:, q].sum() < len(Y)]
    words = [words[q] for q in keep]
    Y = Y[:, keep]
    if not words:
        raise ValueError("no label has both positive and negative items")
    split = make_stratified_splits(np.argmax(Y, axis=1), 1, args.seed)[0]
    tr = np.array(split.train + split.test)
    va = np.array(split.val)
    spec = fit_spec(F[tr], KernelSpec(args.kernel, None, args.normalize))
    grid = _floats(args.C)
    if len(grid) == 1:
        C = grid[0]
    else:
        K_tr = kernel_matrix(F[tr], spec=spec).values
        K_va = kernel_matrix(F[va], F[tr], spec).values
        best, C = -np.inf, grid[0]
        for c in sorted(grid):
            aps = []
            for q in range(len(words)):
                y = np.where(Y[tr, q], 1.0, -1.0)
                if Y[va, q].any() and len(np.unique(y)) == 2:
                    aps.append(average_precision(train_svm(K_tr, y, c).decision(K_va), Y[va, q]))
            score = float(np.mean(aps)) if aps else -np.inf
            if score > best:
                best, C = score, c
    bank = train_attribute_bank(F[tr], Y[tr], words, spec, C, recipe,
                                calibration=(F[va], Y[va]))
    out = Path(args.out or "bank.bin")
    bank.save(out, _meta(args, vocabulary_is_attributes=set(words) <= set(VOCABULARY)))
    print(f"{len(words)} classifiers, C={C}, kernel={spec.kind} -> {out}")


def _load_bank(args):
    from .attributes import AttributeBank

    return AttributeBank.load(args.bank, _config_hash(args))


def _bank_image(path, bank):
    from .dataset import load_image
    from .descriptors import needs_rgb

    rgb = bank.recipe is not None and needs_rgb(bank.recipe.descriptor)
    return load_image(path, "rgb" if rgb else "gray")


def _bank_vectors(args, bank):
    from .attributes import attribute_vector_from_feature, extract_attribute_vector

    if args.features:
        F, items, _ = _load_features(args.features)
        return items, [attribute_vector_from_feature(f, bank) for f in F]
    if not args.images:
        raise ValueError("give images or --features")
    return list(args.images), [extract_attribute_vector(_bank_image(p, bank), bank)
                               for p in args.images]


def cmd_predict(args):
    bank = _load_bank(args)
    items, vecs = _bank_vectors(args, bank)
    lines = ["item," + ",".join(bank.words)]
    for it, v in zip(items, vecs):
        vals = v.probabilities if (args.probabilities and v.probabilities is not None) else v.scores
        lines.append(it + "," + ",".join(f"{x:.6g}" for x in vals))
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def cmd_describe(args):
    from .attributes import describe

    bank = _load_bank(args)
    lines = [f"{w}\t{p:.4f}" for w, p in describe(_bank_image(args.image, bank), bank,
                                                   args.top_k)]
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def cmd_cluster(args):
    from .attributes import cluster_by_attributes

    bank = _load_bank(args)
    items, vecs = _bank_vectors(args, bank)
    result = cluster_by_attributes(vecs, args.k, seed=args.seed)
    obj = json.loads(result.to_json())
    obj["items"] = items
    obj["config_hash"] = args._config_hash
    text = json.dumps(obj, indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def cmd_evaluate(args):
    from .dataset import Manifest, make_stratified_splits, read_splits
    from .evaluation import run_experiment
    from .learn import KernelSpec

    feats = [_load_features(p, _config_hash(args)) for p in args.features]
    items = feats[0][1]
    if any(f[1] != items for f in feats):
        raise ValueError("feature files list different items")
    manifest, Y, rows = _aligned_labels(args.manifest, items)
    if np.any(Y.sum(axis=1) != 1):
        raise ValueError("evaluate needs exactly one label per item")
    labels = np.argmax(Y, axis=1)
    if args.splits:
        ordered = Manifest(tuple(manifest.entries[r] for r in rows), manifest.vocabulary,
                           manifest.root)
        splits = read_splits(args.splits, ordered)
    else:
        splits = make_stratified_splits(labels, args.n_splits, args.seed)
    kinds = args.kernel.split(",")
    if len(kinds) == 1:
        kinds = kinds * len(feats)
    if len(kinds) != len(feats):
        raise ValueError("give one kernel, or one per feature file")
    specs = [KernelSpec(k, None, args.normalize or len(feats) > 1) for k in kinds]
    weights = _floats(args.combine) if args.combine else None
    if weights is not None and len(weights) != len(feats):
        raise ValueError("--combine needs one weight per feature file")
    channels = [f[0] for f in feats]
    feature_arg = channels[0] if len(channels) == 1 else channels
    spec_arg = specs[0] if len(specs) == 1 else specs
    report = run_experiment(feature_arg, labels, splits, spec_arg, _floats(args.C),
                            recipe={"features": [str(p) for p in args.features],
                                    "weights": weights, "config_hash": args._config_hash},
                            weights=weights)
    out = Path(args.out or "report.json")
    if out.suffix != ".json":
        out.mkdir(parents=True, exist_ok=True)
        out = out / "report.json"
    out.write_text(report.to_json() + "\n", encoding="utf-8")
    print(f"accuracy {100 * report.mean:.1f} +/- {100 * report.std:.1f} "
          f"({len(report.per_split)} splits) -> {out}")


def cmd_annotate_sim(args):
    from .annotation import (AnnotatorModel, aggregate, estimate_cooccurrence, make_world,
                             majority_vote, recall_curve, simulate_annotators, suggest_attributes,
                             suggest_attributes_cv, write_recall_csv)

    if not 0 <= args.random_fraction <= 1:
        raise ValueError("--random-fraction must be in [0, 1]")
    world = make_world(items_per_key=args.items_per_key, seed=args.seed)
    rng = np.random.default_rng(args.seed + 1)
    n_random = int(round(args.random_fraction * args.annotators))
    population = [AnnotatorModel(0.5, 0.5) if k < n_random
                  else AnnotatorModel(*rng.uniform(0.7, 0.95, 2))
                  for k in range(args.annotators)]
    model = estimate_cooccurrence(world.labels, world.keys)
    pairs = []
    for i, q in enumerate(world.keys.tolist()):
        if args.planner == "plain":
            extra = suggest_attributes(q, model, args.budget)
        else:
            extra = suggest_attributes_cv(q, world.probabilities[i], model, args.budget)
        pairs += [(q, i)] + [(r, i) for r in extra]
    keys = {i: int(q) for i, q in enumerate(world.keys)}
    batch = simulate_annotators(world.labels, population, pairs, args.votes, args.seed, keys)
    result = aggregate(batch, world.n_attributes)
    majority = majority_vote(batch)
    free = [p for p in pairs if p not in result.posterior.clamped]
    truth = {p: int(world.labels[p[1], p[0]]) for p in free}
    out = _out_dir(args, "annotation")
    batch.to_csv(out / "votes.csv")
    result.posterior.to_csv(out / "posterior.csv")
    curves = {name: recall_curve(world, name, range(0, args.budget + 3))
              for name in ("plain", "cv")}
    write_recall_csv(curves, out / "recall.csv")
    summary = {
        "items": int(len(world.keys)), "pairs": len(pairs), "votes": len(batch),
        "planner": args.planner, "budget": args.budget,
        "aggregated_accuracy": float(np.mean([result.posterior.label(*p) == truth[p]
                                              for p in free])),
        "majority_accuracy": float(np.mean([majority[p] == truth[p] for p in free])),
        "annotators": [{"sensitivity": a.sensitivity, "specificity": a.specificity,
                        "true_sensitivity": t.sensitivity, "true_specificity": t.specificity}
                       for a, t in zip(result.annotators, population)],
        "rounds": result.rounds,
        "config_hash": args._config_hash,
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    print(f"aggregated {100 * summary['aggregated_accuracy']:.1f}% vs majority "
          f"{100 * summary['majority_accuracy']:.1f}% on {len(free)} pairs -> {out}")


def cmd_pipeline(args):
    from dataclasses import replace

    from .pipeline import PipelineConfig, run_pipeline, write_report

    cfg = args._pipeline_config or PipelineConfig()
    over = {}
    if args.descriptor:
        over["descriptor"] = args.descriptor
    if args.encoding:
        over["encoding"] = args.encoding
    if args.size:
        over["vocabulary_size"] = args.size
    if args.kernel:
        over["kernel"] = args.kernel
    if args.n:
        over["synthetic"] = {**cfg.synthetic, "images_per_class": args.n}
    if args.manifest:
        over["manifest"] = args.manifest
    cfg = replace(cfg, seed=args.seed, **over)
    report, seconds = run_pipeline(cfg)
    path = write_report(report, _out_dir(args, "pipeline"), seconds)
    print(f"accuracy {100 * report.mean:.1f} +/- {100 * report.std:.1f}, "
          f"mAP {100 * report.mean_map:.1f} over {len(report.per_split)} splits -> {path}")


# -- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="texdesc", description="Texture description toolkit.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, fn, help_):
        s = sub.add_parser(name, help=help_, description=help_)
        s.add_argument("--config", help="TOML config file")
        s.add_argument("--seed", type=int, default=None, help="root random seed")
        s.add_argument("--out", help="output file or directory")
        s.set_defaults(func=fn)
        return s

    s = add("gen-synthetic", cmd_gen_synthetic, "render a synthetic texture corpus")
    s.add_argument("--classes", help="comma-separated class names")
    s.add_argument("--n", type=int, default=60, help="images per class")
    s.add_argument("--size", type=int, default=64, help="image side in pixels")
    s.add_argument("--splits", type=int, default=10, help="number of splits")
    s.add_argument("--attribute-labels", action="store_true",
                   help="label images with attribute words instead of class names")

    s = add("extract", cmd_extract, "extract local descriptors from images")
    s.add_argument("images", nargs="*")
    s.add_argument("--manifest")
    s.add_argument("--kind", default="sift", help="sift, lm, mr8, patch3, patch7, patch3rgb, "
                                                  "lbpvq")
    s.add_argument("--param", action="append", help="extractor parameter key=value")

    for name, fn, help_ in (("train-codebook", cmd_train_codebook, "k-means vocabulary"),
                            ("train-gmm", cmd_train_gmm, "GMM vocabulary (optional PCA)")):
        s = add(name, fn, f"train a {help_} from extracted descriptors")
        s.add_argument("--descriptors", required=True, help="directory written by extract")
        s.add_argument("--K", type=int, required=True, help="vocabulary size")
        s.add_argument("--max-descriptors", type=int, default=100_000)
        if name == "train-gmm":
            s.add_argument("--pca", type=int, default=80, help="PCA dimension, 0 to disable")
            s.add_argument("--max-iter", type=int, default=100)

    s = add("encode", cmd_encode, "encode descriptor sets into global vectors")
    s.add_argument("--descriptors", required=True)
    s.add_argument("--vocab", required=True, help="codebook or gmm file")
    s.add_argument("--encoding", choices=("bovw", "vlad", "ifv"))

    s = add("train", cmd_train, "train a calibrated classifier bank, one SVM per label")
    s.add_argument("--features", required=True)
    s.add_argument("--manifest", required=True)
    s.add_argument("--kernel", default="linear",
                   choices=("linear", "hellinger", "chi2", "expchi2", "rbf"))
    s.add_argument("--normalize", action="store_true", help="unit self-similarity kernel")
    s.add_argument("--C", default="0.1,1,10,100", help="value or comma-separated grid")

    for name, fn, help_ in (("predict", cmd_predict, "score images with a classifier bank"),
                            ("cluster", cmd_cluster, "cluster images by attribute scores")):
        s = add(name, fn, help_)
        s.add_argument("images", nargs="*")
        s.add_argument("--bank", required=True)
        s.add_argument("--features")
        if name == "predict":
            s.add_argument("--probabilities", action="store_true")
        else:
            s.add_argument("--k", type=int, default=4)

    s = add("describe", cmd_describe, "print the top attribute words for an image")
    s.add_argument("image")
    s.add_argument("--bank", required=True)
    s.add_argument("--top-k", type=int, default=3)

    s = add("evaluate", cmd_evaluate, "multi-split SVM evaluation of encoded features")
    s.add_argument("--features", nargs="+", required=True)
    s.add_argument("--manifest", required=True)
    s.add_argument("--splits", help="directory with trainN/valN/testN.txt")
    s.add_argument("--n-splits", type=int, default=10)
    s.add_argument("--kernel", default="linear", help="kernel kind, or one per feature file")
    s.add_argument("--normalize", action="store_true")
    s.add_argument("--C", default="0.1,1,10,100")
    s.add_argument("--combine", help="comma-separated weights, one per feature file")

    s = add("annotate-sim", cmd_annotate_sim, "simulate joint annotation and aggregation")
    s.add_argument("--annotators", type=int, default=20)
    s.add_argument("--random-fraction", type=float, default=0.05)
    s.add_argument("--votes", type=int, default=5)
    s.add_argument("--budget", type=int, default=10)
    s.add_argument("--planner", choices=("plain", "cv"), default="plain")
    s.add_argument("--items-per-key", type=int, default=12)

    s = add("pipeline", cmd_pipeline, "run the full recognition pipeline from a config")
    s.add_argument("--descriptor")
    s.add_argument("--encoding", choices=("bovw", "vlad", "ifv"))
    s.add_argument("--size", type=int, help="vocabulary size")
    s.add_argument("--kernel")
    s.add_argument("--n", type=int, help="synthetic images per class")
    s.add_argument("--manifest", help="use images from a manifest instead of rendering")
    return p


def _apply_config(parser, argv):
    """Re-parse with defaults taken from the config file, if one is given."""
    from .pipeline import PipelineConfig, load_config_dict

    args = parser.parse_args(argv)
    args._check_hash = None
    args._pipeline_config = None
    if args.config:
        cfg = load_config_dict(args.config)
        section = cfg.get(args.command, {})
        sub = parser._subparsers._group_actions[0].choices[args.command]
        dests = {a.dest for a in sub._actions}
        defaults = {}
        for key, value in section.items():
            dest = key.replace("-", "_")
            if dest not in dests:
                raise ValueError(f"config [{args.command}] has unknown key {key!r}")
            defaults[dest] = value
        sub.set_defaults(**defaults)
        args = parser.parse_args(argv)
        pc = PipelineConfig.from_dict(cfg)
        args._pipeline_config = pc
        if args.seed is None:
            args.seed = pc.seed
    if args.seed is None:
        args.seed = 0
    base = args._pipeline_config or PipelineConfig()
    args._config_hash = base.with_seed(args.seed).digest()
    if args.config:
        args._check_hash = args._config_hash
    return args


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, OSError) as exc:
        print(f"texdesc: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        args.func(args)
    except (ValueError, FormatError, ConfigMismatchError, DegenerateDataError,
            UndefinedMetricError) as exc:
        print(f"texdesc {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - report any runtime failure as exit 1
        print(f"texdesc {args.command}: failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
