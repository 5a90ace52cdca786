"""Command-line pipeline: align -> lexicon -> globaltrait -> {train-eval, project}.

Every command reads one config file (TOML or JSON), applies command-line
overrides, writes a resolved-config snapshot and a manifest recording the
content digests of its inputs and outputs. Downstream commands check those
digests and refuse stale inputs unless ``--force`` is given.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import align as al
from .corpus import load_corpus, median_split
from .embeddings import load_vec, normalize
from .errors import GlobalTraitError, MissingArtifactError, StaleArtifactError
from .eval import MODELS, run_experiment, write_reports
from .lexicon import TraitLexicon, extract_trait_words
from .models import TrainConfig
from .projection import TSNE_DEFAULTS, centroid_separation, project, write_projection
from .synthetic import SyntheticSpec, generate_synthetic_corpus, write_world
from .traits import TRAITS, check_trait

log = logging.getLogger("globaltrait")

DEFAULTS = {
    "seed": 0,
    "preset": "desk",
    "target": "en",
    "languages": [],
    "corpus_format": "pan2015-like",
    "paths": {"output": "globaltrait-out", "embeddings": {}, "corpora": {},
              "multi_embeddings": {}},
    "embeddings": {"limit": None},
    "align": {},
    "lexicon": {"n": 3000, "min_df": 2, "mode": "contrastive"},
    "globaltrait": {},
    "train_eval": {"models": list(MODELS), "task": "classification", "k": 5,
                   "f1_average": "positive", "languages": None, "cnn": {}, "lgr": {}},
    "project": {"space": "multi", "method": "pca", "words": 750, "trait": "Extr",
                "perplexity": TSNE_DEFAULTS["perplexity"],
                "iterations": TSNE_DEFAULTS["iterations"]},
    "synth": {},
}

# train-eval settings per preset; the adversarial presets live in align.PRESETS
PIPELINE_PRESETS = {
    "paper": {"train_eval": {"cnn": {}, "lgr": {}}},
    "desk": {"train_eval": {"cnn": {"epochs": 30, "lr": 1e-3, "filters": 16, "max_tokens": 300},
                            "lgr": {"epochs": 100, "lr": 1e-2}}},
}


# ------------------------------------------------------------------ config

def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def read_config_file(path):
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(f"config file {path} not found")
    text = path.read_text(encoding="utf-8")
    data = json.loads(text) if path.suffix == ".json" else tomllib.loads(text)
    # relative paths are taken relative to the config file
    paths = data.get("paths", {})
    for key, val in paths.items():
        if isinstance(val, dict):
            paths[key] = {k: str((path.parent / v).resolve()) for k, v in val.items()}
        elif isinstance(val, str):
            paths[key] = str((path.parent / val).resolve())
    return data


def _parse_value(raw):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def resolve_config(args):
    file_cfg = read_config_file(args.config) if args.config else {}
    name = args.preset or file_cfg.get("preset") or DEFAULTS["preset"]
    if name not in PIPELINE_PRESETS:
        raise GlobalTraitError(f"unknown preset {name!r}")
    cfg = _merge(_merge(DEFAULTS, PIPELINE_PRESETS[name]), file_cfg)
    cfg["preset"] = name
    if args.seed is not None:
        cfg["seed"] = args.seed
    if getattr(args, "output", None):
        cfg["paths"]["output"] = args.output
    for item in args.set or []:
        key, _, raw = item.partition("=")
        if not _:
            raise GlobalTraitError(f"--set expects key=value, got {item!r}")
        node = cfg
        parts = key.split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
        node[parts[-1]] = _parse_value(raw)
    langs = cfg["languages"] or sorted(set(cfg["paths"]["embeddings"]) | set(cfg["paths"]["corpora"]))
    target = cfg["target"]
    if langs and langs.count(target) != 1:
        raise GlobalTraitError(f"target language {target!r} must appear exactly once in {langs}")
    cfg["languages"] = langs
    return cfg


def adversarial_config(cfg, section):
    allowed = {f.name for f in fields(al.AdversarialConfig)}
    over = {k: v for k, v in cfg.get(section, {}).items() if k in allowed}
    unknown = set(cfg.get(section, {})) - allowed
    if unknown:
        raise GlobalTraitError(f"unknown [{section}] keys {sorted(unknown)}")
    over.setdefault("seed", cfg["seed"])
    return al.preset(cfg["preset"], **over)


def train_configs(cfg):
    te = cfg["train_eval"]
    def build(d):
        d = dict(d)
        if "widths" in d:
            d["widths"] = tuple(d["widths"])
        return TrainConfig(**d)
    return build(te.get("cnn", {})), build(te.get("lgr", {}))


# --------------------------------------------------------------- artifacts

def digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class Workspace:
    def __init__(self, cfg, force=False):
        self.cfg = cfg
        self.force = force
        self.out = Path(cfg["paths"]["output"])
        self.target = cfg["target"]

    @property
    def sources(self):
        return [lang for lang in self.cfg["languages"] if lang != self.target]

    def path(self, *parts):
        return self.out.joinpath(*parts)

    def semantic_map_path(self, lang):
        return self.path("maps", f"{lang}-{self.target}.semantic.map")

    def lexicon_path(self, lang, trait):
        return self.path("lexicons", f"{lang}.{trait}.json")

    def trait_map_dir(self):
        return self.path("traitmaps")

    def manifest_path(self, step):
        return self.path("manifests", f"{step}.json")

    # -- inputs

    def input_file(self, kind, lang):
        p = self.cfg["paths"][kind].get(lang)
        if p is None:
            raise MissingArtifactError(f"no {kind} path configured for language {lang!r}")
        if not Path(p).exists():
            raise MissingArtifactError(f"{kind} file for {lang} not found: {p}")
        return Path(p)

    def mono_table(self, lang):
        path = self.input_file("embeddings", lang)
        return normalize(load_vec(path, limit=self.cfg["embeddings"]["limit"], language=lang))

    def corpus(self, lang):
        path = self.input_file("corpora", lang)
        return median_split(load_corpus(path, self.cfg["corpus_format"], language=lang))

    def require(self, step, paths):
        """Check that ``paths`` exist and match what ``step`` recorded."""
        missing = [str(p) for p in paths if not Path(p).exists()]
        if missing:
            raise MissingArtifactError(f"missing {', '.join(missing)}", step=step)
        mpath = self.manifest_path(step)
        if not mpath.exists():
            return self._stale(f"no manifest for step {step!r}", step)
        manifest = json.loads(mpath.read_text())
        for p in paths:
            rec = manifest["outputs"].get(str(Path(p).resolve()))
            if rec is None or rec != digest(p):
                self._stale(f"{p} was not produced by the last `{step}` run", step)
        for p, d in manifest["inputs"].items():
            if not Path(p).exists() or digest(p) != d:
                self._stale(f"input {p} of `{step}` changed since it ran", step)

    def _stale(self, message, step):
        if self.force:
            log.warning("%s (continuing: --force)", message)
            return
        raise StaleArtifactError(message, step=step)

    def finish(self, step, inputs, outputs):
        """Write the resolved-config snapshot and the step manifest."""
        self.out.mkdir(parents=True, exist_ok=True)
        snap = self.path(f"config.{step}.resolved.json")
        snap.write_text(json.dumps(self.cfg, indent=1, sort_keys=True, default=str))
        manifest = {
            "step": step,
            "config_digest": hashlib.sha256(
                json.dumps(self.cfg, sort_keys=True, default=str).encode()).hexdigest(),
            "inputs": {str(Path(p).resolve()): digest(p) for p in inputs},
            "outputs": {str(Path(p).resolve()): digest(p) for p in outputs},
        }
        self.manifest_path(step).parent.mkdir(parents=True, exist_ok=True)
        self.manifest_path(step).write_text(json.dumps(manifest, indent=1, sort_keys=True))
        return {"step": step, "outputs": sorted(str(p) for p in outputs), "snapshot": str(snap)}

    # -- derived artifacts

    def semantic_map(self, lang):
        return al.OrthogonalMap.load(self.semantic_map_path(lang))

    def multi_table(self, lang):
        """Table in the target's space: an explicit multilingual file if
        configured, else the monolingual table through the semantic map."""
        if lang in self.cfg["paths"]["multi_embeddings"]:
            path = self.input_file("multi_embeddings", lang)
            return normalize(load_vec(path, limit=self.cfg["embeddings"]["limit"],
                                      language=lang, space_tag="multi"))
        mono = self.mono_table(lang)
        if lang == self.target:
            return mono.with_vectors(mono.vectors, space_tag="multi")
        return mono.with_vectors(al.apply_map(self.semantic_map(lang).matrix, mono.vectors),
                                 space_tag="multi")

    def multi_inputs(self, langs):
        """Files behind ``multi_table`` for ``langs``, checked against their producers."""
        files = []
        for lang in langs:
            if lang in self.cfg["paths"]["multi_embeddings"]:
                files.append(self.input_file("multi_embeddings", lang))
                continue
            files.append(self.input_file("embeddings", lang))
            if lang != self.target:
                self.require("align", [self.semantic_map_path(lang)])
                files.append(self.semantic_map_path(lang))
        return files


# ---------------------------------------------------------------- commands

def cmd_align(ws):
    cfg = adversarial_config(ws.cfg, "align")
    tgt = ws.mono_table(ws.target)
    inputs, outputs, scores = [ws.input_file("embeddings", ws.target)], [], {}
    ws.path("maps").mkdir(parents=True, exist_ok=True)
    for lang in ws.sources:
        src = ws.mono_table(lang)
        if src.dim != tgt.dim:
            raise GlobalTraitError(f"{lang} has dim {src.dim}, target has {tgt.dim}")
        m, runs = al.align_semantic(src, tgt, cfg)
        m = al.OrthogonalMap(m.matrix, m.provenance, lang, ws.target)
        p = ws.semantic_map_path(lang)
        m.save(p)
        scores[lang] = max(r["validation"] for r in runs)
        log.info("align %s -> %s: validation mean cosine %.4f", lang, ws.target, scores[lang])
        inputs.append(ws.input_file("embeddings", lang))
        outputs.append(p)
    result = ws.finish("align", inputs, outputs)
    result["validation"] = scores
    return result


def cmd_lexicon(ws):
    lx = ws.cfg["lexicon"]
    inputs, outputs = [], []
    ws.path("lexicons").mkdir(parents=True, exist_ok=True)
    for lang in ws.cfg["languages"]:
        corpus = ws.corpus(lang)
        table = ws.mono_table(lang)
        for trait in TRAITS:
            lex = extract_trait_words(corpus, trait, table, lx["n"], lx["min_df"], lx["mode"])
            p = ws.lexicon_path(lang, trait)
            lex.save(p)
            outputs.append(p)
        inputs += [ws.input_file("corpora", lang), ws.input_file("embeddings", lang)]
    return ws.finish("lexicon", inputs, outputs)


def _lexicons(ws, lang):
    paths = [ws.lexicon_path(lang, t) for t in TRAITS]
    ws.require("lexicon", paths)
    return {t: TraitLexicon.load(p) for t, p in zip(TRAITS, paths)}, paths


def cmd_globaltrait(ws):
    cfg = adversarial_config(ws.cfg, "globaltrait")
    lex_tgt, inputs = _lexicons(ws, ws.target)
    multi_tgt = ws.multi_table(ws.target)
    inputs = inputs + ws.multi_inputs([ws.target])
    outputs, scores = [], {}
    for lang in ws.sources:
        lex_src, lp = _lexicons(ws, lang)
        inputs += lp + ws.multi_inputs([lang])
        alignment = al.train_global_trait(ws.multi_table(lang), multi_tgt, lex_src, lex_tgt, cfg)
        outputs += list(al.save_alignment(alignment, ws.trait_map_dir()).values())
        scores[lang] = {t: max(r["validation"] for r in runs)
                        for t, runs in alignment.history.items()}
    result = ws.finish("globaltrait", inputs, outputs)
    result["validation"] = scores
    return result


def _trait_alignment(ws, lang):
    paths = [ws.trait_map_dir() / f"{lang}-{ws.target}.{t}.map" for t in TRAITS]
    ws.require("globaltrait", paths)
    return al.load_alignment(ws.trait_map_dir(), lang, ws.target), paths


def cmd_train_eval(ws):
    te = ws.cfg["train_eval"]
    models = list(te["models"])
    langs = te.get("languages") or ws.cfg["languages"]
    corpora = {lang: ws.corpus(lang) for lang in set(langs) | {ws.target}}
    tables = {lang: ws.mono_table(lang) for lang in set(langs) | {ws.target}}
    inputs = [ws.input_file(k, lang) for lang in sorted(corpora) for k in ("corpora", "embeddings")]
    semantic, traits = {}, {}
    needs_multi = any(not m.endswith("mono") for m in models)
    needs_trait = any(m.endswith("GlobalTrait") for m in models)
    for lang in langs:
        if lang == ws.target:
            continue
        if needs_multi:
            ws.require("align", [ws.semantic_map_path(lang)])
            semantic[lang] = ws.semantic_map(lang)
            inputs.append(ws.semantic_map_path(lang))
        if needs_trait:
            traits[lang], paths = _trait_alignment(ws, lang)
            inputs += paths
    cnn_cfg, lgr_cfg = train_configs(ws.cfg)
    reports = run_experiment(corpora, tables, semantic, traits, target=ws.target, models=models,
                             languages=langs, task=te["task"], k=te["k"], seed=ws.cfg["seed"],
                             cnn_config=cnn_cfg, lgr_config=lgr_cfg,
                             f1_average=te["f1_average"])
    outputs = write_reports(reports, ws.path("reports", te["task"]))
    return ws.finish("train-eval", inputs, outputs)


def cmd_project(ws):
    pj = ws.cfg["project"]
    space = pj["space"]
    if space == "multi":
        trait = pj["trait"]
        maps = {}
    elif space.startswith("trait:"):
        trait = space.split(":", 1)[1]
        check_trait(trait)
        maps = {}
        for lang in ws.sources:
            try:
                alignment, _ = _trait_alignment(ws, lang)
            except MissingArtifactError as exc:
                raise MissingArtifactError(
                    f"trait space {space} requested but trait maps are missing: {exc}",
                    step=exc.step) from None
            maps[lang] = alignment.maps[trait].matrix
    else:
        raise GlobalTraitError(f"unknown space {space!r}; use 'multi' or 'trait:<TraitId>'")
    check_trait(trait)
    words, langs, rows, inputs = [], [], [], []
    for lang in ws.cfg["languages"]:
        lex, lp = _lexicons(ws, lang)
        inputs += lp + ws.multi_inputs([lang])
        table = ws.multi_table(lang)
        chosen = [w for w in lex[trait].words if w in table][:pj["words"]]
        vecs = table.rows(chosen)
        if lang in maps:
            vecs = al.apply_map(maps[lang], vecs)
        words += chosen
        langs += [lang] * len(chosen)
        rows.append(vecs)
    X = np.vstack(rows)
    kw = {} if pj["method"] == "pca" else {"perplexity": pj["perplexity"],
                                           "iterations": pj["iterations"]}
    coords = project(X, pj["method"], seed=ws.cfg["seed"], **kw)
    meta = {"space": space, "method": pj["method"], "trait": trait, "seed": ws.cfg["seed"],
            "separation_full_dim": f"{centroid_separation(X, langs):.6g}"}
    meta.update(kw)
    ws.path("projections").mkdir(parents=True, exist_ok=True)
    out = ws.path("projections", f"{space.replace(':', '-')}.{pj['method']}.csv")
    write_projection(out, words, langs, coords, meta)
    result = ws.finish("project", inputs, [out])
    result["separation"] = float(meta["separation_full_dim"])
    return result


def cmd_synth(ws):
    spec_kw = dict(ws.cfg.get("synth", {}))
    for k in ("languages", "users_per_language"):
        if isinstance(spec_kw.get(k), list):
            spec_kw[k] = tuple(spec_kw[k])
    spec_kw.setdefault("seed", ws.cfg["seed"])
    spec = SyntheticSpec(**spec_kw)
    world = generate_synthetic_corpus(spec)
    paths = write_world(world, ws.out)
    fixture_cfg = {
        "target": world.target, "languages": list(spec.languages), "seed": ws.cfg["seed"],
        "corpus_format": "pan2015-like",
        "paths": {"output": "run",
                  "embeddings": {k: v.name for k, v in paths["embeddings"].items()},
                  "corpora": {k: v.name for k, v in paths["corpora"].items()}},
    }
    (ws.out / "config.json").write_text(json.dumps(fixture_cfg, indent=1))
    outputs = [*paths["embeddings"].values(), *paths["corpora"].values(), paths["ground_truth"]]
    return ws.finish("synth", [], outputs)


COMMANDS = {"align": cmd_align, "lexicon": cmd_lexicon, "globaltrait": cmd_globaltrait,
            "train-eval": cmd_train_eval, "project": cmd_project, "synth": cmd_synth}


def build_parser():
    parser = argparse.ArgumentParser(prog="globaltrait", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", help="TOML or JSON pipeline config")
    parser.add_argument("--seed", type=int, help="override the config seed")
    parser.add_argument("--preset", choices=sorted(PIPELINE_PRESETS))
    parser.add_argument("--output", help="override paths.output")
    parser.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override a config entry, e.g. lexicon.n=500 (JSON values)")
    parser.add_argument("--space", help="projection space: multi or trait:<TraitId>")
    parser.add_argument("--method", choices=("pca", "tsne"), help="projection method")
    parser.add_argument("--force", action="store_true", help="accept stale inputs")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        if args.space:
            cfg["project"]["space"] = args.space
        if args.method:
            cfg["project"]["method"] = args.method
        result = COMMANDS[args.command](Workspace(cfg, force=args.force))
    except (GlobalTraitError, OSError, ValueError, KeyError, TypeError) as exc:
        err = {"error": type(exc).__name__, "message": str(exc), "command": args.command,
               "step": getattr(exc, "step", None)}
        print(json.dumps(err), file=sys.stderr)
        return 1
    print(json.dumps(result, default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())
