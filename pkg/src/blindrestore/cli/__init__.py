from .config import ConfigError, RunConfig, load_config, parse_scales
from .main import build_parser, main

__all__ = ["ConfigError", "RunConfig", "build_parser", "load_config", "main", "parse_scales"]
