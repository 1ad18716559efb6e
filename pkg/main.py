#!/usr/bin/env python3
"""
dimg-lab - dynamic information manipulation games
Main application entry point.
"""
import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

# Add lib directory to path
sys.path.insert(0, str(Path(__file__).parent))

from lib import TOOL_NAME, __version__
from lib.commands import COMMANDS, EXIT_FAILURE, EXIT_RESOURCE, EXIT_USAGE, BaseCommand
from lib.config_manager import DESIGN_SCHEMES, REPORT_FORMATS, ConfigManager, RunConfig
from lib.errors import BoundViolationError, DesignError, ResourceCapError, ScenarioError
from lib.reporting.writer import ReportWriter

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    """Subcommands share one set of flags; unset flags fall back to env/config/defaults."""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--scenario', help='scenario JSON path or bundled name')
    common.add_argument('--out', dest='out_dir', help='output directory')
    common.add_argument('--config', help='run configuration JSON (default: config.json if present)')
    common.add_argument('--seed', type=int, help='root seed (unsigned 64-bit)')
    common.add_argument('--samples', type=int, help='Monte-Carlo sample count')
    common.add_argument('--grid', type=int, help='action-grid resolution of discrete-example')
    common.add_argument('--cap', type=int, help='history cap')
    common.add_argument('--scheme', choices=DESIGN_SCHEMES, help='manipulation scheme')
    common.add_argument('--verify', action='store_true', default=None, help='attach oracle gaps')
    common.add_argument('--format', choices=REPORT_FORMATS, help='tabular report format')
    common.add_argument('--workers', type=int, help='Monte-Carlo streams')
    common.add_argument('--plan', help='plan JSON written by the design command')
    common.add_argument('--trajectories', type=int, help='trajectories to dump as CSV')
    common.add_argument('--eps-bar', dest='eps_bar', type=float, help='per-stage distortion')
    common.add_argument('--goal', type=float, help='deviation goal')
    common.add_argument('--eps-total', dest='eps_total', type=float, help='total distortion budget')
    common.add_argument('--cost-weight', dest='cost_weight', type=float, help='quadratic distortion cost')
    common.add_argument('--resolution', type=int, help='allocation grid steps')
    common.add_argument('--log-level', dest='log_level', help='logging level')

    parser = argparse.ArgumentParser(prog=TOOL_NAME, description=__doc__)
    parser.add_argument('--version', action='version', version=f"{TOOL_NAME} {__version__}")
    subparsers = parser.add_subparsers(dest='command', required=True)
    for name, command in COMMANDS.items():
        subparsers.add_parser(name, parents=[common], help=command.__doc__)
    return parser


class DimgApp:
    """Main application class for dimg-lab."""

    def __init__(self, argv: Optional[List[str]] = None):
        """
        Initialize the application.

        Args:
            argv: Command-line arguments (default: sys.argv[1:])
        """
        self.argv = argv
        self.config_manager = None
        self.config: Optional[RunConfig] = None
        self.command: Optional[BaseCommand] = None
        self.writer: Optional[ReportWriter] = None

    def setup(self) -> None:
        """Parse arguments, merge configuration and build the command."""
        args = vars(build_parser().parse_args(self.argv))
        config_path = args.pop('config')

        self.config_manager = ConfigManager(config_path)
        self.config_manager.load()
        self.config = self.config_manager.build_run_config(args)

        logging.getLogger().setLevel(self.config.log_level)
        logger.info(f"Running {self.config.command} on {self.config.scenario}")

        self.command = COMMANDS[self.config.command](self.config)
        self.writer = ReportWriter(self.config.out_dir, self.config.config_hash(),
                                   self.config.seed, self.config.format)

    def run(self) -> int:
        """Run the selected command and map failures to exit codes."""
        try:
            self.setup()
            return self.command.run(self.writer)
        except (ScenarioError, DesignError, BoundViolationError) as e:
            logger.error(f"{e}")
            return EXIT_FAILURE
        except ResourceCapError as e:
            logger.error(f"Resource cap reached: {e}")
            return EXIT_RESOURCE
        except ValueError as e:
            logger.error(f"{e}")
            return EXIT_USAGE
        except FileNotFoundError as e:
            logger.error(f"File not found: {e.filename or e}")
            return EXIT_USAGE
        except OSError as e:
            logger.error(f"I/O error on {e.filename}: {e.strerror}")
            return EXIT_USAGE
        finally:
            self.cleanup()

    def cleanup(self) -> None:
        """Report what was written."""
        if self.writer:
            for path in self.writer.written:
                logger.info(f"Wrote {path}")


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point."""
    # Only warnings and errors by default; --log-level raises verbosity
    logging.basicConfig(
        level=logging.WARNING,
        format=LOG_FORMAT,
        handlers=[
            logging.StreamHandler(sys.stdout)
        ]
    )
    return DimgApp(argv).run()


if __name__ == "__main__":
    sys.exit(main())
