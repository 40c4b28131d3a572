"""
Command-line bootstrap.
Configures logging, validates process configuration and dispatches verbs.
"""
from typing import List, Optional
import logging
import sys

import torch

from gestdiff.cli.commands import STAGES, build_parser
from gestdiff.core.config import config
from gestdiff.core.errors import DataError, UsageError


logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_DATA_ERROR = 1
EXIT_USAGE_ERROR = 2


def configure_logging(level: Optional[str] = None) -> None:
    """Install one stream handler on the root logger."""
    logging.basicConfig(
        level=(level or config.LOG_LEVEL).upper(),
        format=config.LOG_FORMAT,
        stream=sys.stderr,
        force=True,
    )


def main(argv: Optional[List[str]] = None) -> int:
    """
    Run one CLI verb.

    Returns:
        0 on success, 1 on data errors, 2 on usage errors
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exit_request:
        return EXIT_USAGE_ERROR if exit_request.code else EXIT_OK

    configure_logging(args.log_level)
    try:
        config.validate()
    except ValueError as error:
        logger.error("Configuration error: %s", error)
        return EXIT_USAGE_ERROR
    torch.set_num_threads(config.TORCH_THREADS)

    stage = STAGES[args.command]
    try:
        return args.handler(args)
    except UsageError as error:
        logger.error("%s: %s", stage, error)
        return EXIT_USAGE_ERROR
    except DataError as error:
        logger.error("%s: %s", stage, error)
        return EXIT_DATA_ERROR
    except OSError as error:
        logger.error("%s: %s", stage, error)
        return EXIT_DATA_ERROR


if __name__ == "__main__":
    sys.exit(main())
