"""Command-line entry point: ``cartier <command> ...``.

Exit codes: 0 success, 1 data or build error (including a label missing from
the index), 2 configuration or authentication error, 3 LLM backend error,
4 the LLM answer named no known object.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .dataset import (
    HOUSEHOLD_LABELS,
    SyntheticConfig,
    detector_vocabulary,
    generate_synthetic,
    load_queries,
    load_scene_truth,
    load_trajectory,
    save_queries,
    save_scene_truth,
    save_trajectory,
)
from .errors import (
    AuthFailure,
    BackendError,
    CartierError,
    EmbedderLacksPixelCapability,
    GroundingError,
    LabelNotIndexed,
    NoMatch,
)
from .evaluation import (
    ALL_METHODS,
    EquivalenceConfig,
    EvalScene,
    EvalSettings,
    FixedListProposer,
    MethodSpec,
    Report,
    adjudicate,
    evaluate,
    read_records_csv,
    write_records_csv,
)
from .grounding import (
    DEFAULT_TEMPLATE,
    LlmParams,
    MockBackend,
    OpenAICompatibleBackend,
    PromptTemplate,
    ResponseCache,
    ground_query,
    parse_object,
)
from .index import (
    EMBEDDING_GRID,
    INDEX_TYPES,
    OBJECT_DEPTH,
    OBJECT_VIEWPOINT,
    EmbeddingGrid,
    HashingEmbedder,
    SyntheticPixelEmbedder,
    accumulate_grid,
    build_object_depth,
    build_object_viewpoint,
    load_index,
    save_index,
)

log = logging.getLogger("cartier")

EXIT_OK, EXIT_DATA, EXIT_CONFIG, EXIT_BACKEND, EXIT_NO_MATCH = 0, 1, 2, 3, 4
BACKENDS = ("live", "record", "replay", "mock")
EMBEDDERS = ("none", "synthetic", "hashing")


class ConfigError(Exception):
    pass


@dataclass
class RunConfig:
    """Flags shared by the commands, checked before any work starts."""

    backend: str = "mock"
    model: str | None = None
    cache: Path | None = None
    template: Path | None = None
    embedder: str = "none"
    embedder_dim: int = 64
    threshold: float = 0.8
    extra: dict = field(default_factory=dict)

    def validate(self) -> None:
        if self.backend in ("record", "replay") and self.cache is None:
            raise ConfigError(f"--backend {self.backend} requires --cache")
        if self.backend == "replay" and not self.cache.exists():
            raise ConfigError(f"replay cache not found: {self.cache}")
        if self.template is not None and not self.template.is_file():
            raise ConfigError(f"template file not found: {self.template}")
        if not (0.0 <= self.threshold <= 1.0):
            raise ConfigError("--threshold must lie in [0, 1]")

    @property
    def model_name(self) -> str:
        if self.model:
            return self.model
        if self.backend == "mock":
            return "mock"
        return os.environ.get("CARTIER_LLM_MODEL", "gpt-4")

    @property
    def mode(self) -> str:
        return "live" if self.backend == "mock" else self.backend

    def load_template(self) -> PromptTemplate:
        return PromptTemplate.from_file(self.template) if self.template else DEFAULT_TEMPLATE

    def make_embedder(self):
        if self.embedder == "synthetic":
            return SyntheticPixelEmbedder(self.embedder_dim)
        if self.embedder == "hashing":
            return HashingEmbedder(self.embedder_dim)
        return None

    def make_backend(self, template: PromptTemplate):
        if self.backend == "mock":
            return keyword_mock(template, self.model_name)
        if self.backend == "replay":
            return None
        return OpenAICompatibleBackend.from_env(self.model_name)

    def make_cache(self) -> ResponseCache | None:
        return ResponseCache(self.cache) if self.cache is not None else None


def keyword_mock(template: PromptTemplate, model: str = "mock") -> MockBackend:
    """Offline stand-in: answers with the listed object the query names, else the first one."""

    def policy(objects, query):
        try:
            return parse_object(query, objects)
        except NoMatch:
            return objects[0]

    return MockBackend(template, policy, model)


def _add_backend_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--backend", choices=BACKENDS, default="mock", help="LLM backend mode (default: mock)")
    p.add_argument("--model", help="model name (default: $CARTIER_LLM_MODEL or gpt-4; 'mock' for --backend mock)")
    p.add_argument("--cache", type=Path, help="LLM response cache file (required for record/replay)")
    p.add_argument("--template", type=Path, help="prompt template file with {objects} and {query}")
    p.add_argument("--temperature", type=float, default=0.0)
    p.add_argument("--max-tokens", type=int, default=256)


def _add_embedder_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--embedder", choices=EMBEDDERS, default="none", help="embedder for embedding-grid indices")
    p.add_argument("--embedder-dim", type=int, default=64)


def _config(args) -> RunConfig:
    cfg = RunConfig(
        backend=getattr(args, "backend", "mock"),
        model=getattr(args, "model", None),
        cache=getattr(args, "cache", None),
        template=getattr(args, "template", None),
        embedder=getattr(args, "embedder", "none"),
        embedder_dim=getattr(args, "embedder_dim", 64),
        threshold=getattr(args, "threshold", 0.8),
    )
    cfg.validate()
    return cfg


def _params(args, cfg: RunConfig) -> LlmParams:
    return LlmParams(model=cfg.model_name, temperature=args.temperature, max_tokens=args.max_tokens)


# -- commands ---------------------------------------------------------------


def cmd_gen_synthetic(args) -> int:
    cfg = SyntheticConfig(
        seed=args.seed,
        object_count=args.objects,
        waypoint_count=args.waypoints,
        depth_noise_sigma=args.noise,
        camera_height=args.camera_height,
    )
    traj, truth, queries = generate_synthetic(cfg)
    out = Path(args.out)
    save_trajectory(traj, out / "trajectory")
    save_scene_truth(truth, out / "scene.json")
    save_queries(queries, out / "queries.json")
    print(f"wrote {len(traj.frames)} frames, {len(traj.detections)} detections, "
          f"{len(truth.objects)} objects, {len(queries)} queries to {out}")
    return EXIT_OK


def cmd_build_index(args) -> int:
    cfg = _config(args)
    if args.type == EMBEDDING_GRID and cfg.embedder == "none" and args.pixel_embeddings is None:
        raise EmbedderLacksPixelCapability(
            "embedding-grid needs pixel embeddings: pass --embedder synthetic or --pixel-embeddings FILE.npz"
        )
    traj = load_trajectory(args.trajectory)
    if args.type == OBJECT_DEPTH:
        index = build_object_depth(traj, cfg.threshold, args.workers, on_missing="skip")
    elif args.type == OBJECT_VIEWPOINT:
        index = build_object_viewpoint(traj, cfg.threshold, compensate=not args.no_compensate)
    else:
        pixel = None
        embedder = cfg.make_embedder()
        if args.pixel_embeddings is not None:
            with np.load(args.pixel_embeddings) as npz:
                pixel = {fr.frame_id: npz[str(fr.frame_id)] for fr in traj.frames}
        if embedder is None and pixel is None:
            raise EmbedderLacksPixelCapability("no embedder selected")
        index = accumulate_grid(
            traj, embedder, args.cell_size, pixel, args.dropped_dims or (), args.workers,
            embedder_id=args.embedder_id,
        )
    save_index(index, args.out)
    if isinstance(index, EmbeddingGrid):
        filled = int((index.counts > 0).sum())
        print(f"{EMBEDDING_GRID}: {filled} populated cells of {index.shape[0]}x{index.shape[1]}")
    else:
        per_label = {}
        for d in traj.detections:
            if d.confidence > cfg.threshold:
                per_label[d.label] = per_label.get(d.label, 0) + 1
        for label in index.labels:
            print(f"{label}: 1 entry ({per_label.get(label, 0)} detections)")
        print(f"{index.variant}: {len(index)} labels")
    return EXIT_OK


def _answer(args, cfg, traj, index, embedder, backend, cache, template, params, text) -> int:
    g = ground_query(traj, text, backend, index, template, params, cache, cfg.mode, embedder, cfg.threshold)
    x, y, z = (float(c) for c in g.point)
    print(f"{g.label} @ ({x:.3f}, {y:.3f}, {z:.3f})")
    if args.verbose:
        print(f"response: {g.response}")
    return EXIT_OK


def cmd_query(args) -> int:
    cfg = _config(args)
    if not args.interactive and not args.text:
        raise ConfigError("give a query with --text or use --interactive")
    template = cfg.load_template()
    params = _params(args, cfg)
    traj = load_trajectory(args.trajectory)
    index = load_index(args.index)
    embedder = cfg.make_embedder()
    if isinstance(index, EmbeddingGrid) and embedder is None:
        raise ConfigError("querying an embedding-grid index needs --embedder")
    backend = cfg.make_backend(template)
    cache = cfg.make_cache()
    if not args.interactive:
        return _answer(args, cfg, traj, index, embedder, backend, cache, template, params, args.text)
    status = EXIT_OK
    while True:
        try:
            text = input("query> ")
        except EOFError:
            print()
            return status
        if not text.strip():
            continue
        try:
            status = _answer(args, cfg, traj, index, embedder, backend, cache, template, params, text)
        except CartierError as e:
            status = _report_error(e)


def _load_scene_dir(path: Path) -> EvalScene:
    truth = load_scene_truth(path / "scene.json")
    return EvalScene(truth, load_trajectory(path / "trajectory"), load_queries(path / "queries.json", truth))


def _method_specs(methods, indices) -> list[MethodSpec]:
    if not methods and not indices:
        return list(ALL_METHODS)
    methods = methods or ["cartier"]
    indices = indices or list(INDEX_TYPES)
    specs = []
    for m in methods:
        for i in indices:
            try:
                specs.append(MethodSpec(m, i))
            except ValueError:
                if len(indices) == 1:
                    raise ConfigError(f"method {m!r} cannot use index {i!r}") from None
    if not specs:
        raise ConfigError("no valid method/index combination selected")
    return specs


def cmd_evaluate(args) -> int:
    cfg = _config(args)
    specs = _method_specs(args.method, args.index)
    needs_grid = any(s.index == EMBEDDING_GRID for s in specs)
    if needs_grid and cfg.embedder == "none":
        raise ConfigError("embedding-grid methods need --embedder")
    template = cfg.load_template()
    scenes = [_load_scene_dir(Path(d)) for d in args.dataset]
    if args.query_type:
        for sc in scenes:
            sc.queries = [q for q in sc.queries if q.query_type.value in args.query_type]
    eq = EquivalenceConfig.load(args.eq) if args.eq else EquivalenceConfig()
    proposals = HOUSEHOLD_LABELS
    if args.proposals:
        proposals = [ln.strip() for ln in Path(args.proposals).read_text().splitlines() if ln.strip()]
    models = args.model_list or [cfg.model_name]
    backends = {}
    for m in models:
        c = RunConfig(**{**cfg.__dict__, "model": m})
        backends[m] = c.make_backend(template)
    settings = EvalSettings(
        template=template,
        base_params=_params(args, cfg),
        cache=cfg.make_cache(),
        mode=cfg.mode,
        embedder=cfg.make_embedder(),
        proposer=FixedListProposer(proposals),
        proposal_threshold=args.proposal_threshold,
        token_limit=args.token_limit,
        confidence_threshold=cfg.threshold,
        eq=eq,
    )
    report = evaluate(scenes, specs, backends, settings, workers=args.workers)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_records_csv(report.records, out / "records.csv")
    md = report.to_markdown()
    (out / "report.md").write_text(md, encoding="utf-8")
    print(md, end="")
    return EXIT_OK


def cmd_adjudicate(args, ask=None, interactive: bool | None = None) -> int:
    records = read_records_csv(args.records)
    eq = EquivalenceConfig.load(args.eq)
    report = Report(records)
    if not report.pending:
        print("nothing to adjudicate")
        return EXIT_OK
    if interactive is None:
        interactive = sys.stdin.isatty()
    if not interactive:
        raise ConfigError("adjudicate needs an interactive terminal")

    def prompt_human(rec, pred, target):
        while True:
            ans = input(f"[{rec.query_id}] count '{pred}' as a match for '{target}'? [y/n] ").strip().lower()
            if ans in ("y", "yes", "n", "no"):
                return ans.startswith("y")

    records, decided = adjudicate(records, eq, ask or prompt_human)
    eq.save(args.eq)
    write_records_csv(records, args.records)
    md = Report(records).to_markdown()
    if args.out_md:
        Path(args.out_md).write_text(md, encoding="utf-8")
    print(f"{decided} decisions saved to {args.eq}")
    print(md, end="")
    return EXIT_OK


# -- wiring -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cartier", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synthetic", help="write a synthetic dataset directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--objects", type=int, default=10)
    p.add_argument("--waypoints", type=int, default=8)
    p.add_argument("--noise", type=float, default=0.0, help="depth noise sigma in meters")
    p.add_argument("--camera-height", type=float, default=1.5)
    p.set_defaults(func=cmd_gen_synthetic)

    p = sub.add_parser("build-index", help="build a spatial language index from a trajectory")
    p.add_argument("--trajectory", required=True, type=Path)
    p.add_argument("--type", required=True, choices=INDEX_TYPES)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--threshold", type=float, default=0.8, help="detection confidence threshold (strict)")
    p.add_argument("--no-compensate", action="store_true", help="object-viewpoint: rank by raw bbox area")
    p.add_argument("--cell-size", type=float, default=0.1)
    p.add_argument("--dropped-dims", type=int, nargs="*")
    p.add_argument("--pixel-embeddings", type=Path, help="npz of per-frame HxWxD arrays keyed by frame id")
    p.add_argument("--embedder-id", help="identity tag for precomputed pixel embeddings")
    p.add_argument("--workers", type=int, default=1)
    _add_embedder_flags(p)
    p.set_defaults(func=cmd_build_index)

    p = sub.add_parser("query", help="ground one query (or a session of queries)")
    p.add_argument("--trajectory", required=True, type=Path)
    p.add_argument("--index", required=True, type=Path)
    p.add_argument("--text")
    p.add_argument("--interactive", action="store_true")
    p.add_argument("--threshold", type=float, default=0.8)
    _add_backend_flags(p)
    _add_embedder_flags(p)
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("evaluate", help="evaluate methods over dataset directories")
    p.add_argument("--dataset", required=True, action="append", help="dataset directory (repeatable)")
    p.add_argument("--method", action="append", choices=("cartier", "direct-index", "proposal-threshold"))
    p.add_argument("--index", action="append", choices=INDEX_TYPES)
    p.add_argument("--query-type", action="append", choices=("explicit", "implicit", "conversational"))
    p.add_argument("--models", dest="model_list", nargs="+", help="evaluate several models")
    p.add_argument("--eq", type=Path, help="equivalence config (synonyms, colocations)")
    p.add_argument("--proposals", type=Path, help="proposal names, one per line")
    p.add_argument("--proposal-threshold", type=float)
    p.add_argument("--token-limit", type=int, default=77)
    p.add_argument("--threshold", type=float, default=0.8)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True, type=Path, help="output directory for records.csv and report.md")
    _add_backend_flags(p)
    _add_embedder_flags(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("adjudicate", help="resolve needs-adjudication records by hand")
    p.add_argument("--records", required=True, type=Path)
    p.add_argument("--eq", required=True, type=Path)
    p.add_argument("--out-md", type=Path)
    p.set_defaults(func=cmd_adjudicate)
    return parser


def _report_error(e: Exception) -> int:
    if isinstance(e, NoMatch):
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NO_MATCH
    if isinstance(e, AuthFailure):
        print(f"authentication error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    if isinstance(e, BackendError):
        print(f"backend error: {e}", file=sys.stderr)
        return EXIT_BACKEND
    if isinstance(e, ConfigError):
        print(f"configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    if isinstance(e, LabelNotIndexed):
        print(f"index miss: {e}", file=sys.stderr)
        return EXIT_DATA
    if isinstance(e, GroundingError) and isinstance(e, ValueError):
        print(f"configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
    return EXIT_DATA


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (CartierError, ConfigError) as e:
        return _report_error(e)
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
