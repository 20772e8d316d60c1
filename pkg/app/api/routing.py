"""
Subcommand routing: one CommandRouter per feature package, collected by a
CommandApp that owns the argparse tree.

Every top-level scalar field of a request schema becomes a ``--flag`` (field
name with dashes); nested settings are reached with ``--set a.b=value``.
Values are merged over the optional ``--config`` JSON and validated by the
request schema, so unknown keys and bad values fail before any work starts.
"""
import argparse
import enum
import json
import logging
import sys
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Optional, Type

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from app.config import settings
from app.errors import ConfigurationError
from app.utils.storage import read_json, write_json

logger = logging.getLogger(__name__)

Handler = Callable[[Any], BaseModel]


class RunRequest(BaseModel):
    """Base for request schemas; `out` is where every artifact lands"""
    out: str = Field(..., description="Output directory")

    model_config = ConfigDict(extra="forbid")

    def output_dir(self) -> Path:
        return Path(self.out)


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> typing.NoReturn:
        raise ConfigurationError(f"{self.prog}: {message}")


def _flag_name(field_name: str) -> str:
    return "--" + field_name.replace("_", "-")


def _scalar_kind(annotation: Any) -> Optional[tuple[str, Optional[list]]]:
    origin = typing.get_origin(annotation)
    if origin is typing.Union:
        args = [a for a in typing.get_args(annotation) if a is not type(None)]
        return _scalar_kind(args[0]) if len(args) == 1 else None
    if origin is typing.Literal:
        return "choice", [str(a) for a in typing.get_args(annotation)]
    if annotation is bool:
        return "bool", None
    if annotation in (int, float, str, Path):
        return "value", None
    if isinstance(annotation, type) and issubclass(annotation, enum.Enum):
        return "choice", [m.value for m in annotation]
    return None


def _parse_assignment(text: str) -> tuple[list[str], Any]:
    if "=" not in text:
        raise ConfigurationError(f"--set expects key=value, got '{text}'")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip().split("."), value


def _assign(payload: dict, path: list[str], value: Any) -> None:
    node = payload
    for part in path[:-1]:
        child = node.get(part)
        if not isinstance(child, dict):
            child = {}
            node[part] = child
        node = child
    node[path[-1]] = value


def _validation_detail(error: ValidationError) -> str:
    parts = []
    for item in error.errors():
        loc = ".".join(str(p) for p in item["loc"]) or "<root>"
        parts.append(f"{loc}: {item['msg']}")
    return "invalid configuration (" + "; ".join(parts) + ")"


@dataclass
class CommandRouter:
    """Registers one subcommand: its request schema, handler and help text"""
    name: str
    help: str
    request_model: Optional[Type[RunRequest]] = None
    handler: Optional[Handler] = None
    aliases: dict[str, str] = field(default_factory=dict)

    def command(self, request_model: Type[RunRequest], aliases: Optional[dict[str, str]] = None):
        """Decorator binding the handler; aliases map extra flag names to field names"""
        def decorator(fn: Handler) -> Handler:
            self.request_model = request_model
            self.handler = fn
            self.aliases = dict(aliases or {})
            return fn
        return decorator

    def add_arguments(self, parser: argparse.ArgumentParser) -> None:
        parser.add_argument("--config", help="JSON file with any of the request fields")
        parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                            help="Override a (possibly nested) field, e.g. weights.lambda_blur=0")
        parser.add_argument("--progress", action="store_true", help="Progress lines on standard error")
        flag_for = {v: k for k, v in self.aliases.items()}
        for name, info in self.request_model.model_fields.items():
            kind = _scalar_kind(info.annotation)
            if kind is None:
                continue
            flags = [_flag_name(name)] + ([flag_for[name]] if name in flag_for else [])
            help_text = info.description or ""
            if kind[0] == "bool":
                parser.add_argument(*flags, dest=name, action=argparse.BooleanOptionalAction,
                                    default=None, help=help_text)
            else:
                parser.add_argument(*flags, dest=name, default=None, choices=kind[1], help=help_text)

    def build_request(self, args: argparse.Namespace) -> RunRequest:
        payload: dict = {}
        if args.config:
            path = Path(args.config)
            if not path.is_file():
                raise ConfigurationError(f"--config file not found: {path}")
            try:
                payload = read_json(path)
            except json.JSONDecodeError as e:
                raise ConfigurationError(f"--config {path} is not valid JSON: {str(e)}")
            if not isinstance(payload, dict):
                raise ConfigurationError(f"--config {path} must hold a JSON object")
        for name in self.request_model.model_fields:
            value = getattr(args, name, None)
            if value is not None:
                payload[name] = value
        for assignment in args.set:
            path, value = _parse_assignment(assignment)
            _assign(payload, path, value)
        try:
            return self.request_model.model_validate(payload)
        except ValidationError as e:
            raise ConfigurationError(_validation_detail(e))


class CommandApp:
    """Collects routers and dispatches argv to the matching handler"""

    def __init__(self, prog: str, description: str):
        self.prog = prog
        self.description = description
        self.routers: dict[str, CommandRouter] = {}

    def include_router(self, router: CommandRouter) -> None:
        if router.handler is None:
            raise ConfigurationError(f"router '{router.name}' has no command bound")
        self.routers[router.name] = router

    def build_parser(self) -> argparse.ArgumentParser:
        parser = _Parser(prog=self.prog, description=self.description)
        sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
        for name, router in self.routers.items():
            router.add_arguments(sub.add_parser(name, help=router.help, description=router.help))
        return parser

    def dispatch(self, argv: list[str]) -> BaseModel:
        args = self.build_parser().parse_args(argv)
        if not args.command:
            raise ConfigurationError(f"{self.prog}: a subcommand is required "
                                     f"({', '.join(self.routers)})")
        router = self.routers[args.command]
        request = router.build_request(args)
        out_dir = request.output_dir()
        out_dir.mkdir(parents=True, exist_ok=True)
        configure_logging(out_dir / settings.RUN_LOG_NAME, args.progress)
        write_json(out_dir / settings.RESOLVED_CONFIG_NAME, request)
        logger.info(f"[{router.name.upper()}] Resolved config written to "
                    f"{out_dir / settings.RESOLVED_CONFIG_NAME}")
        return router.handler(request)


def configure_logging(log_file: Optional[Path] = None, progress: bool = False) -> None:
    handlers: list[logging.Handler] = []
    if log_file is not None:
        handlers.append(logging.FileHandler(log_file, mode="w", encoding="utf-8"))
    if progress:
        handlers.append(logging.StreamHandler(sys.stderr))
    if not handlers:
        handlers.append(logging.NullHandler())
    logging.basicConfig(
        level=settings.LOG_LEVEL,
        format=settings.LOG_FORMAT,
        datefmt=settings.LOG_DATEFMT,
        handlers=handlers,
        force=True,
    )
