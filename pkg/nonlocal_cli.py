"""
Command-line entry point for the nonlocal evolution toolkit.

Usage:
    python nonlocal_cli.py <simulate|attractor|compare|lyapunov|sweep|selftest>
        [--config run.toml] [--output-dir DIR] [--threads N] [--quiet]

Exit status: 0 on success, 1 when a verified property fails or the run
breaks, 2 on configuration errors.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

# Add current directory to path for imports
project_root = Path(__file__).parent
if str(project_root) not in sys.path:
    sys.path.insert(0, str(project_root))

from config import RunConfig, get_settings, load_config, parse_config
from src.dynamics.exceptions import CheckFailure
from src.orchestrator import EXPERIMENTS, ExperimentOrchestrator
from utils.logger import setup_logging
from utils.validators import ValidationError

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG_ERROR = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nonlocal_cli",
        description="Numerical experiments for du/dt = -u + g(t, Ku).",
    )
    parser.add_argument("command", choices=list(EXPERIMENTS), help="experiment to run")
    parser.add_argument("--config", type=Path, help="TOML run configuration")
    parser.add_argument("--output-dir", type=Path, help="overrides output_dir from the config")
    parser.add_argument("--threads", type=int, help="worker threads (default: NONLOCAL_THREADS or 1)")
    parser.add_argument("--quiet", action="store_true", help="log warnings and errors only")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Main application function."""
    args = build_parser().parse_args(argv)
    settings = get_settings()
    setup_logging("WARNING" if args.quiet else settings.log_level, settings.log_file)

    try:
        config: RunConfig = load_config(args.config) if args.config else parse_config("")
        output_dir = args.output_dir or Path(config.output_dir)
        orchestrator = ExperimentOrchestrator(output_dir, args.threads)
        result = orchestrator.run(args.command, config)

    except ValidationError as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG_ERROR

    except CheckFailure as e:
        print(f"check failed: {e}", file=sys.stderr)
        return EXIT_CHECK_FAILED

    except RuntimeError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CHECK_FAILED

    for name in result.get("artifacts", []):
        print(output_dir / name)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
