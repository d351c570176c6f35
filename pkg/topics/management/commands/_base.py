import logging

from django.core.management.base import BaseCommand, CommandError
from django.db import DatabaseError

from topics.config import load_run_config
from topics.exceptions import TiganError
from topics.forms import FORMS

logger = logging.getLogger("topics.commands")


class ConfigCommand(BaseCommand):
    """A subcommand configured from settings defaults, an INI section and flags.

    Every field of the section's form becomes a ``--flag``; subclasses
    implement ``execute_run(run_config)``.
    """

    section = None

    def add_arguments(self, parser):
        parser.add_argument("--config", help=f"INI file; the [{self.section}] section is read.")
        for name, field in FORMS[self.section].base_fields.items():
            parser.add_argument("--" + name.replace("_", "-"), dest=name, default=None, metavar=name.upper())

    def handle(self, *args, **options):
        overrides = {name: options.get(name) for name in FORMS[self.section].base_fields}
        try:
            run_config = load_run_config(self.section, options.get("config"), overrides)
            self.execute_run(run_config)
        except TiganError as exc:
            raise CommandError(str(exc)) from exc

    def execute_run(self, run_config):
        raise NotImplementedError

    def success(self, message):
        self.stdout.write(self.style.SUCCESS(message))


def registry_write(action, *args, **kwargs):
    """Run a registry update; a missing table only costs the record, not the run."""
    try:
        return action(*args, **kwargs)
    except DatabaseError as exc:
        logger.warning("run registry unavailable (%s); run `manage.py migrate` to enable it", exc)
        return None
