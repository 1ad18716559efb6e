"""CLI subcommands."""
from lib.commands.base_command import EXIT_FAILURE, EXIT_OK, EXIT_RESOURCE, EXIT_USAGE, BaseCommand
from lib.commands.design import DesignCommand
from lib.commands.deviation import DeviationCommand
from lib.commands.gaussian import GaussianCommand
from lib.commands.persistency import AllocationCommand, PersistencyCommand
from lib.commands.solve_dm import SolveDmCommand
from lib.commands.validate import ValidateCommand

COMMANDS = {
    command.name: command
    for command in (ValidateCommand, SolveDmCommand, DesignCommand, DeviationCommand,
                    GaussianCommand, PersistencyCommand, AllocationCommand)
}

__all__ = [
    'BaseCommand', 'COMMANDS', 'EXIT_OK', 'EXIT_FAILURE', 'EXIT_USAGE', 'EXIT_RESOURCE',
    'ValidateCommand', 'SolveDmCommand', 'DesignCommand', 'DeviationCommand',
    'GaussianCommand', 'PersistencyCommand', 'AllocationCommand',
]
