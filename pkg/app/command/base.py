import argparse
import json
from abc import ABC, abstractmethod
from pathlib import Path
from typing import Any, Dict, List, Optional, Type, TypeVar

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from app.exceptions import CommandError


ConfigT = TypeVar("ConfigT", bound=BaseModel)


class RunContext(BaseModel):
    """Global options shared by every command"""

    seed: int = Field(0, ge=0)
    output_dir: Path
    workers: int = Field(1, ge=1)


class CommandConfig(BaseModel):
    """Base for command config files; unknown keys are rejected"""

    model_config = ConfigDict(extra="forbid", populate_by_name=True)


class BaseCommand(ABC, BaseModel):
    name: str
    description: str

    class Config:
        arbitrary_types_allowed = True

    def __call__(self, context: RunContext, args: argparse.Namespace) -> "CommandResult":
        """Execute the command with parsed arguments."""
        return self.execute(context, args)

    @abstractmethod
    def add_arguments(self, parser: argparse.ArgumentParser) -> None:
        """Register command-specific arguments."""

    @abstractmethod
    def execute(self, context: RunContext, args: argparse.Namespace) -> "CommandResult":
        """Execute the command with parsed arguments."""


class CommandResult(BaseModel):
    """Represents the result of a command execution."""

    output: Any = Field(default=None)
    error: Optional[str] = Field(default=None)
    exit_code: int = Field(default=0)
    files: List[str] = Field(default_factory=list)

    class Config:
        arbitrary_types_allowed = True

    def __bool__(self):
        return self.exit_code == 0

    def __str__(self):
        return f"Error: {self.error}" if self.error else str(self.output)


class CommandFailure(CommandResult):
    """A CommandResult that represents a failure."""


def load_config(path: Optional[Path], model: Type[ConfigT], schema: str) -> ConfigT:
    """Validate a JSON config file against model; a missing path gives the defaults."""
    if path is None:
        return model()
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise CommandError(f"cannot read config {path}: {e}") from None
    if not isinstance(raw, dict):
        raise CommandError(f"config {path} must hold a JSON object")
    if raw.get("schema", schema) != schema:
        raise CommandError(f"config {path}: expected schema {schema}, found {raw['schema']}")
    try:
        return model.model_validate(raw)
    except ValidationError as e:
        raise CommandError(f"invalid config {path}: {e}") from None


def apply_overrides(cfg: ConfigT, overrides: Dict[str, Any]) -> ConfigT:
    """Flags override file values; None means the flag was not given."""
    updates = {k: v for k, v in overrides.items() if v is not None}
    if not updates:
        return cfg
    try:
        return type(cfg).model_validate({**cfg.model_dump(by_alias=True), **updates})
    except ValidationError as e:
        raise CommandError(f"invalid command-line value: {e}") from None


def write_json(path: Path, payload: Any) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def parse_float_list(text: Optional[str]) -> Optional[List[float]]:
    """"580,590,600" or "start:stop:step" (stop inclusive)."""
    if text is None:
        return None
    try:
        if ":" in text:
            start, stop, step = (float(part) for part in text.split(":"))
            if not step > 0 or stop < start:
                raise ValueError("range needs start <= stop and a positive step")
            count = int(round((stop - start) / step)) + 1
            return [round(start + i * step, 10) for i in range(count)]
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError as e:
        raise CommandError(f"cannot parse number list {text!r}: {e}") from None
