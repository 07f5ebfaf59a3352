"""Run configuration: one YAML file wires corpus, client and backends.

Relative paths inside the file resolve against the file's own directory,
so a config can travel with its fixtures.  The client credential (HTTP
clients only) comes from an environment variable named in the descriptor
and is never written anywhere.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .errors import ConfigError
from .extractor import ExtractionBudget
from .fragmenter import ScoringConfig
from .harness import Backend, backend_from_descriptor
from .repository import Corpus
from .retrieval import DEFAULT_LIBRARY_CAP, ExemplarLibrary, load_seed_exemplars
from .textgen import TextGenClient, client_from_descriptor

DEFAULT_BETA = 0.4
DEFAULT_MAX_ITERS = 5
DEFAULT_TIMEOUT = 30.0


@dataclass
class PipelineConfig:
    """Validated knobs for a pipeline run."""

    corpus_dir: Path
    base_dir: Path
    client_descriptor: dict[str, Any] | None = None
    backend_descriptors: list[dict[str, Any]] = field(default_factory=list)
    scoring: ScoringConfig = field(default_factory=ScoringConfig)
    beta: float = DEFAULT_BETA
    max_iters: int = DEFAULT_MAX_ITERS
    exec_timeout: float = DEFAULT_TIMEOUT
    budget: ExtractionBudget = field(default_factory=ExtractionBudget)
    library_path: Path | None = None
    library_cap: int = DEFAULT_LIBRARY_CAP

    def __post_init__(self) -> None:
        if not 0 < self.beta <= 1:
            raise ConfigError(f"beta must be in (0, 1], got {self.beta}")
        if self.max_iters < 1:
            raise ConfigError(f"max_iters must be at least 1, got {self.max_iters}")
        if self.exec_timeout <= 0:
            raise ConfigError(f"exec_timeout must be positive, got {self.exec_timeout}")
        if self.library_cap < 1:
            raise ConfigError(f"library cap must be positive, got {self.library_cap}")
        names = [d.get("name", "backend") for d in self.backend_descriptors]
        if len(names) != len(set(names)):
            raise ConfigError(f"backend names must be unique, got {names}")

    # -- loading -----------------------------------------------------------

    @classmethod
    def load(cls, path: Path | str) -> "PipelineConfig":
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            data = yaml.safe_load(path.read_text("utf-8")) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"config is not valid YAML: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config root must be a mapping")
        return cls.from_dict(data, base_dir=path.parent.resolve())

    @classmethod
    def from_dict(cls, data: dict[str, Any], base_dir: Path | str = ".") -> "PipelineConfig":
        base = Path(base_dir).resolve()

        def resolve(p: str | None) -> Path | None:
            if p is None:
                return None
            candidate = Path(p)
            return candidate if candidate.is_absolute() else base / candidate

        adaptation = dict(data.get("adaptation", {}))
        extraction = dict(data.get("extraction", {}))
        library = dict(data.get("library", {}))
        try:
            budget = ExtractionBudget(
                max_rounds=int(extraction.get("max_rounds", 3)),
                expansion_lines=int(extraction.get("expansion_lines", 8)),
                token_budget=int(extraction.get("token_budget", 4000)),
                retrieval_k=int(extraction.get("retrieval_k", 4)),
            )
            scoring = ScoringConfig.from_dict(dict(data.get("scoring", {})))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad scoring/extraction settings: {exc}") from exc
        cfg = cls(
            corpus_dir=resolve(str(data.get("corpus_dir", "corpus"))),
            base_dir=base,
            client_descriptor=data.get("client"),
            backend_descriptors=[dict(b) for b in data.get("backends", [])],
            scoring=scoring,
            beta=float(adaptation.get("beta", DEFAULT_BETA)),
            max_iters=int(adaptation.get("max_iters", DEFAULT_MAX_ITERS)),
            exec_timeout=float(adaptation.get("timeout", DEFAULT_TIMEOUT)),
            budget=budget,
            library_path=resolve(library.get("path")),
            library_cap=int(library.get("cap", DEFAULT_LIBRARY_CAP)),
        )
        cfg.check_references()
        return cfg

    def check_references(self) -> None:
        """Every file the config points at must exist up front."""
        if self.client_descriptor and self.client_descriptor.get("kind") == "scripted":
            script = self.client_descriptor.get("script")
            if not script:
                raise ConfigError("scripted client needs a script path")
            if not self._resolve(script).is_file():
                raise ConfigError(f"client script not found: {script}")
        for desc in self.backend_descriptors:
            program = desc.get("program")
            if program and not self._resolve(program).is_file():
                raise ConfigError(f"backend program not found: {program}")

    def _resolve(self, p: str) -> Path:
        candidate = Path(p)
        return candidate if candidate.is_absolute() else self.base_dir / candidate

    # -- factories -----------------------------------------------------------

    def open_corpus(self, create: bool = True) -> Corpus:
        return Corpus.open(self.corpus_dir, create=create)

    def make_client(self) -> TextGenClient:
        if not self.client_descriptor:
            raise ConfigError("this command needs a client section in the config")
        return client_from_descriptor(self.client_descriptor, base_dir=self.base_dir)

    def make_backends(self, provision: bool = True) -> list[tuple[Backend, frozenset[str]]]:
        """Instantiate every configured backend with its campaign roles."""
        if not self.backend_descriptors:
            raise ConfigError("this command needs a backends section in the config")
        built = []
        for desc in self.backend_descriptors:
            backend = backend_from_descriptor(desc, base_dir=self.base_dir)
            if provision:
                backend.provision()
            roles = frozenset(str(r) for r in desc.get("roles", []))
            built.append((backend, roles))
        return built

    def backend_for_dialect(self, dialect: str, provision: bool = True) -> Backend:
        """First configured backend whose dialect matches, else ConfigError."""
        for desc in self.backend_descriptors:
            if desc.get("dialect", "generic").lower() == dialect.lower():
                backend = backend_from_descriptor(desc, base_dir=self.base_dir)
                if provision:
                    backend.provision()
                return backend
        raise ConfigError(f"no backend configured for dialect {dialect!r}")

    def open_library(self) -> ExemplarLibrary:
        """Load the exemplar library, seeding from the packaged set."""
        if self.library_path is not None and self.library_path.is_file():
            return ExemplarLibrary.load(self.library_path)
        return load_seed_exemplars(cap=self.library_cap)

    def save_library(self, library: ExemplarLibrary) -> None:
        if self.library_path is not None:
            self.library_path.parent.mkdir(parents=True, exist_ok=True)
            library.save(self.library_path)


def default_config(corpus_dir: Path | str) -> PipelineConfig:
    """Config for runs without a file: corpus-only commands still work."""
    return PipelineConfig(corpus_dir=Path(corpus_dir).resolve(), base_dir=Path.cwd())
