#!/usr/bin/env python
# -*- encoding: utf-8 -*-
import logging
import logging.config
import os
import string
import sys
import threading
from datetime import datetime
from io import StringIO
from typing import Any, Dict, Union

import colorama
import structlog
from structlog._frames import _find_first_app_frame_and_name

from magrec.exception import UsageError

logger = structlog.get_logger()

_LEVELS = ('critical', 'exception', 'error', 'warn', 'warning', 'info', 'debug', 'notset')

CONSOLE_FORMAT = '{log_color}{level_uc:>8s}: {event:s}'
LEGACY_FORMAT = '{timestamp_local_ctime} {process:d}/{thread_name:s} {file:s}:{line:d} {level_uc:s} {event:s}'


class _FormatRenderer:

    def __init__(self, fmt: str, colors: bool = True, force_colors: bool = False):
        if colors:
            if force_colors:
                colorama.deinit()
                colorama.init(strip=False)
            else:
                colorama.init()
            self._level_to_color = {
                'critical': colorama.Fore.RED,
                'exception': colorama.Fore.RED,
                'error': colorama.Fore.RED,
                'warn': colorama.Fore.YELLOW,
                'warning': colorama.Fore.YELLOW,
                'info': colorama.Fore.GREEN,
                'debug': colorama.Fore.WHITE,
                'notset': colorama.Back.RED,
            }
            self._reset = colorama.Style.RESET_ALL
        else:
            self._level_to_color = {level: '' for level in _LEVELS}
            self._reset = ''

        self._vformat = string.Formatter().vformat
        self._fmt = fmt

    def __call__(self, _, __, event_dict: Dict[str, Any]) -> str:
        level = event_dict.get('level')
        event_dict['log_color_reset'] = self._reset
        event_dict['log_color'] = self._level_to_color.get(level, '') if level is not None else ''
        if level is not None:
            event_dict['level_uc'] = level.upper()
        if 'timestamp' in event_dict:
            event_dict['timestamp_local_ctime'] = datetime.fromtimestamp(event_dict['timestamp']).ctime()

        message = StringIO()
        message.write(self._vformat(self._fmt, [], event_dict))
        for trailer in (event_dict.pop('stack', None), event_dict.pop('exception', None)):
            if trailer is not None:
                message.write('\n' + trailer)
        message.write(self._reset)

        return message.getvalue()


def _sl_processor_add_source_context(_, __, event_dict: Dict) -> Dict:
    frame, name = _find_first_app_frame_and_name([__name__, 'logging'])
    event_dict['file'] = frame.f_code.co_filename
    event_dict['line'] = frame.f_lineno
    event_dict['function'] = frame.f_code.co_name
    return event_dict


def _sl_processor_add_process_context(_, __, event_dict: Dict) -> Dict:
    event_dict['process'] = os.getpid()
    event_dict['thread_name'] = threading.current_thread().name
    event_dict['thread_id'] = threading.get_ident()
    return event_dict


_sl_processor_timestamper = structlog.processors.TimeStamper(utc=True)

_sl_foreign_pre_chain = [
    structlog.stdlib.add_log_level,
    _sl_processor_timestamper,
    _sl_processor_add_source_context,
    _sl_processor_add_process_context,
]

_sl_processors = [
    structlog.stdlib.add_log_level,
    structlog.stdlib.PositionalArgumentsFormatter(),
    _sl_processor_timestamper,
    _sl_processor_add_source_context,
    _sl_processor_add_process_context,
    structlog.processors.StackInfoRenderer(),
    structlog.processors.format_exc_info,
    structlog.stdlib.ProcessorFormatter.wrap_for_formatter,
]


def _formatter(processor) -> Dict[str, Any]:
    return {
        '()': structlog.stdlib.ProcessorFormatter,
        'processor': processor,
        'foreign_pre_chain': _sl_foreign_pre_chain,
    }


def _level_to_int(level: Union[str, int]) -> int:
    try:
        return int(level)
    except ValueError:
        pass
    numeric_level = logging.getLevelName(str(level).upper())
    if isinstance(numeric_level, int):
        return numeric_level
    logger.warning('Unknown logging level %s, falling back to INFO.', level)
    return logging.INFO


def setup_logging(*,
                  logfile: str = None,
                  console_level: Union[str, int] = 'INFO',
                  console_formatter: str = 'json',
                  logfile_formatter: str = 'legacy') -> None:
    console_level_int = _level_to_int(console_level)

    formatters = {
        'console-plain': _formatter(_FormatRenderer(colors=False, fmt=CONSOLE_FORMAT)),
        'console-colored': _formatter(_FormatRenderer(colors=True, fmt=CONSOLE_FORMAT)),
        'legacy': _formatter(_FormatRenderer(colors=False, fmt=LEGACY_FORMAT)),
        'json': _formatter(structlog.processors.JSONRenderer()),
    }
    for formatter in (console_formatter, logfile_formatter):
        if formatter not in formatters:
            raise UsageError('Event formatter {} is unknown.'.format(formatter))

    handlers: Dict[str, Dict[str, Any]] = {
        'console': {
            'level': console_level_int,
            'class': 'logging.StreamHandler',
            'formatter': console_formatter,
            'stream': 'ext://sys.stderr',
        },
    }
    if logfile is not None:
        handlers['file'] = {
            'level': min(console_level_int, logging.INFO),
            'class': 'logging.handlers.WatchedFileHandler',
            'filename': logfile,
            'formatter': logfile_formatter,
        }

    logging.config.dictConfig({
        'version': 1,
        'disable_existing_loggers': False,
        'formatters': formatters,
        'handlers': handlers,
        'loggers': {
            '': {
                'handlers': list(handlers.keys()),
                'level': 'DEBUG',
                'propagate': True,
            },
        },
    })


def _handle_exception(exc_type, exc_value, exc_traceback):
    if issubclass(exc_type, KeyboardInterrupt):
        sys.__excepthook__(exc_type, exc_value, exc_traceback)
        return

    logger.error('Uncaught exception', exc_info=(exc_type, exc_value, exc_traceback))


sys.excepthook = _handle_exception

structlog.configure(
    processors=_sl_processors,
    context_class=dict,
    logger_factory=structlog.stdlib.LoggerFactory(),
    wrapper_class=structlog.stdlib.BoundLogger,
    cache_logger_on_first_use=True,
)

setup_logging()

# cvxpy is only imported by the test-suite oracles
logging.getLogger('cvxpy').setLevel(logging.WARN)
