from .config import GlobalConfig, build_config, load_config, parse_overrides
from .main import build_parser, main
