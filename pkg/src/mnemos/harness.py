"""Experiment runner: seeded 20 Questions matches across baseline and memory arms.

Config files are INI-style (``key = value`` under ``[sections]``); see
``docs/config.md`` for every key.
"""
from __future__ import annotations

import configparser
import datetime as _dt
import json
import logging
import os
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

from . import __version__
from .embedding import EmbedderConfig, make_embedder
from .errors import ContractViolation
from .metrics import MetricReport, aggregate, format_table
from .policy import PolicyKind
from .session_engine import (
    BaselineSession,
    ResponderConfig,
    Session,
    SessionConfig,
    Transcript,
    fingerprint,
)
from .twentyq_env import Corpus, GameOutcome, ScriptedGuesser, SessionContext, load_corpus, run_match

logger = logging.getLogger(__name__)

_ARM_RE = re.compile(r"^(baseline-stateless|baseline-rolling-(\d+)|memory-(none|lru|relevance)|baseline|memory)$")


@dataclass(frozen=True)
class ExperimentConfig:
    seeds: tuple[int, ...] = tuple(range(200))
    arms: tuple[str, ...] = ("baseline-rolling-1", "memory-relevance")
    capacity: int = 64
    window: int = 8
    policy: str = "relevance"
    baseline: str = "rolling"
    baseline_k: int = 1
    lookback: int = 1
    corpus_path: str | None = None
    output_dir: str = "runs"
    parallelism: int = field(default_factory=lambda: os.cpu_count() or 1)
    embedder: EmbedderConfig = field(default_factory=EmbedderConfig)
    responder: ResponderConfig = field(default_factory=ResponderConfig)

    def __post_init__(self):
        if self.capacity < 1:
            raise ContractViolation("capacity must be >= 1")
        if self.window < 1:
            raise ContractViolation("window must be >= 1")
        if not self.seeds:
            raise ContractViolation("seeds must be non-empty")
        if self.baseline not in ("stateless", "rolling"):
            raise ContractViolation(f"unknown baseline {self.baseline!r}")
        PolicyKind.parse(self.policy, self.window)
        for arm in self.arms:
            if not _ARM_RE.match(arm):
                raise ContractViolation(f"unknown arm {arm!r}")

    @property
    def baseline_arm(self) -> str:
        return "baseline-stateless" if self.baseline == "stateless" or self.baseline_k == 0 \
            else f"baseline-rolling-{self.baseline_k}"

    def resolve_arm(self, arm: str) -> str:
        if arm == "baseline":
            return self.baseline_arm
        if arm == "memory":
            return f"memory-{self.policy}"
        return arm

    def resolved_arms(self) -> list[str]:
        out = []
        for arm in self.arms:
            name = self.resolve_arm(arm)
            if name not in out:
                out.append(name)
        return out

    def to_dict(self) -> dict:
        d = asdict(self)
        d["seeds"] = list(self.seeds)
        d["arms"] = list(self.arms)
        d["embedder"]["token"] = None
        d["responder"]["token"] = None
        d["responder"]["script"] = dict(self.responder.script)
        return d

    def fingerprint(self) -> str:
        d = self.to_dict()
        # where results go and how fast they are produced does not change them
        d.pop("output_dir")
        d.pop("parallelism")
        return fingerprint(d)

    def session_config(self, policy: str) -> SessionConfig:
        return SessionConfig(
            capacity=self.capacity,
            policy=PolicyKind.parse(policy, self.window),
            embedder=self.embedder,
            responder=self.responder,
            window=self.window,
        )


@dataclass
class RunManifest:
    fingerprint: str
    engine_version: str
    started: str
    finished: str | None = None
    status: str = "running"
    files: dict[str, dict[str, str]] = field(default_factory=dict)
    error: str | None = None

    def to_dict(self) -> dict:
        return asdict(self)


# -- config files -------------------------------------------------------------


def parse_seeds(text: str) -> tuple[int, ...]:
    """``"0-199"``, ``"1,2,5"`` or mixtures like ``"0-9,20"``."""
    seeds: list[int] = []
    for part in filter(None, (p.strip() for p in str(text).split(","))):
        if "-" in part[1:]:
            lo, hi = part.split("-", 1)
            seeds.extend(range(int(lo), int(hi) + 1))
        else:
            seeds.append(int(part))
    return tuple(seeds)


def _split_list(text: str) -> tuple[str, ...]:
    return tuple(filter(None, (p.strip() for p in text.replace("\n", ",").split(","))))


def load_config(path=None, environ=None, **overrides) -> ExperimentConfig:
    """Read an INI experiment config, then env-var and keyword overrides.

    Keyword overrides use ExperimentConfig field names; ``None`` values are ignored.
    """
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";",))
    cp.optionxform = str  # keep [script] keys verbatim
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(path)
        cp.read(path, encoding="utf-8")

    def get(section, key, fallback=None):
        return cp.get(section, key, fallback=fallback) if cp.has_section(section) else fallback

    kwargs: dict = {}
    if (v := get("experiment", "seeds")) is not None:
        kwargs["seeds"] = parse_seeds(v)
    if (v := get("experiment", "arms")) is not None:
        kwargs["arms"] = _split_list(v)
    if (v := get("experiment", "corpus")):
        corpus = Path(v)
        if path is not None and not corpus.is_absolute():
            corpus = path.parent / corpus
        kwargs["corpus_path"] = str(corpus)
    if (v := get("experiment", "output")):
        kwargs["output_dir"] = v
    for key in ("parallelism", "lookback"):
        if (v := get("experiment", key)) is not None:
            kwargs[key] = int(v)
    if (v := get("memory", "capacity")) is not None:
        kwargs["capacity"] = int(v)
    if (v := get("memory", "window")) is not None:
        kwargs["window"] = int(v)
    if (v := get("memory", "policy")) is not None:
        kwargs["policy"] = v.strip()
    if (v := get("baseline", "kind")) is not None:
        kwargs["baseline"] = v.strip()
    if (v := get("baseline", "k")) is not None:
        kwargs["baseline_k"] = int(v)

    emb: dict = {}
    for key, conv in (("backend", str), ("dimension", int), ("normalization", str),
                      ("url", str), ("token", str), ("model", str), ("timeout", float)):
        if (v := get("embedder", key)):
            emb[key] = conv(v)
    resp: dict = {}
    for key, conv in (("backend", str), ("max_chars", int), ("url", str), ("token", str),
                      ("model", str), ("timeout", float), ("retries", int), ("default", str)):
        if (v := get("responder", key)):
            resp[key] = conv(v)
    if (v := get("responder", "prompt_template")):
        resp["prompt_template"] = v.replace("\\n", "\n")
    if cp.has_section("script"):
        resp["script"] = dict(cp.items("script"))

    kwargs["embedder"] = EmbedderConfig(**emb).with_env(environ)
    kwargs["responder"] = ResponderConfig(**resp).with_env(environ)
    kwargs.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig(**kwargs)


def validate_config(config: ExperimentConfig) -> list[str]:
    problems = []
    if config.corpus_path and not Path(config.corpus_path).exists():
        problems.append(f"corpus file not found: {config.corpus_path}")
    if config.embedder.backend == "external" and not config.embedder.url:
        problems.append("external embedder needs [embedder] url or MNEMOS_EMBED_URL")
    if config.responder.backend == "external-chat" and not config.responder.url:
        problems.append("external-chat responder needs [responder] url or MNEMOS_CHAT_URL")
    return problems


# -- running ----------------------------------------------------------------------


@dataclass
class ArmResult:
    arm: str
    transcript: Transcript
    outcomes: list[GameOutcome]


def make_arm_session(config: ExperimentConfig, arm: str):
    if arm.startswith("memory-"):
        session = Session(config.session_config(arm.split("-", 1)[1]), session_id=arm)
        return session, config.lookback
    k = 0 if arm == "baseline-stateless" else int(arm.rsplit("-", 1)[1])
    return BaselineSession(k, config.responder, session_id=arm), 0


def run_arm(config: ExperimentConfig, arm: str, corpus: Corpus | None = None) -> ArmResult:
    """All seeds, in order, through one session: memory persists across matches."""
    corpus = corpus or load_corpus(config.corpus_path)
    session, lookback = make_arm_session(config, arm)
    provider = SessionContext(session, lookback=lookback)
    guesser = ScriptedGuesser(corpus)
    outcomes = [run_match(corpus, seed, guesser, context_provider=provider) for seed in config.seeds]
    return ArmResult(arm, session.transcript, outcomes)


def replay_baseline(config: ExperimentConfig, transcript: Transcript) -> Transcript:
    """The configured baseline answering the exact query sequence of ``transcript``."""
    session, _ = make_arm_session(config, config.baseline_arm)
    for query in transcript.queries:
        session.run_turn(query)
    return session.transcript


def report_for(config: ExperimentConfig, result: ArmResult) -> MetricReport:
    embedder = make_embedder(config.embedder)
    if result.arm.startswith("baseline"):
        paired = result.transcript
    else:
        paired = replay_baseline(config, result.transcript)
    return aggregate([result.transcript], result.outcomes, baselines=[paired], embedder=embedder)


def _arm_job(args):
    config, arm = args
    result = run_arm(config, arm)
    return result, report_for(config, result)


def run_experiment(config: ExperimentConfig) -> RunManifest:
    """Run every arm over every seed and write transcripts, reports and a comparison table.

    Arms run in parallel (bounded by ``config.parallelism``); within an arm
    seeds run in order because the memory store carries over between matches.
    """
    manifest = RunManifest(config.fingerprint(), __version__, _now())
    out = Path(config.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        arms = config.resolved_arms()
        jobs = [(config, arm) for arm in arms]
        workers = max(1, min(config.parallelism, len(jobs)))
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(_arm_job, jobs))
        else:
            results = [_arm_job(job) for job in jobs]

        rows = []
        for result, report in results:
            arm = result.arm
            files = {
                "transcript": result.transcript.write_jsonl(out / f"{arm}.transcript.jsonl"),
                "matches": _write_matches(out / f"{arm}.matches.jsonl", result.outcomes),
                "report": _write_text(out / f"{arm}.report.json", report.to_json() + "\n"),
            }
            manifest.files[arm] = {k: str(v) for k, v in files.items()}
            rows.append((arm, report))
        table = _write_text(out / "comparison.txt", format_table(rows))
        manifest.files["comparison"] = {"table": str(table)}
        manifest.status = "complete"
    except OSError as exc:
        manifest.status = "failed"
        manifest.error = f"{type(exc).__name__}: {exc}"
        raise
    finally:
        manifest.finished = _now()
        try:
            _write_text(out / "manifest.json", json.dumps(manifest.to_dict(), indent=2) + "\n")
        except OSError:
            logger.exception("could not write manifest")
    return manifest


def _write_matches(path: Path, outcomes: Sequence[GameOutcome]) -> Path:
    with path.open("w", encoding="utf-8") as fh:
        for o in outcomes:
            for r in o.records:
                row = {"seed": o.seed, "keyword": o.keyword, **r.__dict__}
                fh.write(json.dumps(row, separators=(",", ":")) + "\n")
    return path


def _write_text(path: Path, text: str) -> Path:
    path.write_text(text, encoding="utf-8")
    return path


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


__all__ = [
    "ArmResult",
    "ExperimentConfig",
    "RunManifest",
    "load_config",
    "make_arm_session",
    "parse_seeds",
    "replay_baseline",
    "report_for",
    "run_arm",
    "run_experiment",
    "validate_config",
]
