#!/usr/bin/env python3
"""
    Pretty print methods and error class.
        Class PrettyPrintError(Exception), error messages.
        Class Colours, the ANSI control strings used.
        Methods:
            print_coloured: Print a coloured message.
            print_debug: Print a debug message.
            print_error: Print an error message.
            print_info: Print an info message.
            print_warning: Print a warning message.
    Everything goes to standard error; standard output is reserved for reports.
"""
import sys
from typing import Optional, Final, TextIO

VERSION: float = 2.0

DEBUG: bool = False
VERBOSE: bool = False


class PrettyPrintError(Exception):
    """Class for all pretty print errors."""
    _errorMessages: dict[int, str] = {
        0: 'No error_number.',
        1: 'TypeError: message must be a string.',
        2: 'TypeError: fg_colour must be a string or None.',
        6: 'TypeError: bold must be a bool.',
        25: 'TypeError: append must be a bool.',
        27: 'TypeError: force must be a bool.',
    }

    def __init__(self, error_number: int, *args: object) -> None:
        super().__init__(*args)
        self.error_number: int = error_number
        self.error_message: str = self._errorMessages[error_number]
        return


class Colours(object):
    """ANSI control strings."""
    reset: Final[str] = '\033[0m'
    """Reset all colours and styles to default."""
    bold: Final[str] = '\033[01m'
    """Apply bold intensity."""

    class FG(object):
        """Foreground Colours."""
        red: Final[str] = '\033[31m'
        green: Final[str] = '\033[32m'
        orange: Final[str] = '\033[33m'
        purple: Final[str] = '\033[35m'
        cyan: Final[str] = '\033[36m'


def _use_colour(stream: TextIO) -> bool:
    return hasattr(stream, 'isatty') and stream.isatty()


def print_coloured(message: str,
                   fg_colour: Optional[str] = None,
                   bold: bool = False,
                   end: str = '\n',
                   stream: Optional[TextIO] = None,
                   ) -> None:
    """
    Pretty print a message, colours are dropped when the stream is not a terminal.
    :param message: str: Message to print.
    :param fg_colour: Optional[str]: Foreground colour control string.
    :param bold: bool: Use bold font. Defaults to False.
    :param end: str: What to pass to print as the end argument.
    :param stream: Optional[TextIO]: Where to print, defaults to standard error.
    :raises PrettyPrintError: On type error.
    :returns: None
    """
    if not isinstance(message, str):
        raise PrettyPrintError(1)
    if fg_colour is not None and not isinstance(fg_colour, str):
        raise PrettyPrintError(2)
    if not isinstance(bold, bool):
        raise PrettyPrintError(6)
    if stream is None:
        stream = sys.stderr
    line: str = message
    if _use_colour(stream):
        prefix: str = ''
        if fg_colour is not None:
            prefix += fg_colour
        if bold:
            prefix += Colours.bold
        line = prefix + message + Colours.reset
    print(line, end=end, file=stream, flush=True)
    return


def _print_titled(title: str, colour: str, message: object, append: bool) -> None:
    if not isinstance(append, bool):
        raise PrettyPrintError(25)
    if not append:
        print_coloured(title, fg_colour=colour, bold=True, end=' ')
    print(str(message), file=sys.stderr, flush=True)
    return


def print_debug(message: object, append: bool = False, force: bool = False) -> None:
    """
    Pretty print a debug message, only if DEBUG is true.
    :param message: object: Message to print, note str(message) is called.
    :param append: bool: Append to the message, skips printing title.
    :param force: bool: Force printing the message, ignores DEBUG.
    :returns: None
    """
    if not isinstance(force, bool):
        raise PrettyPrintError(27)
    if not DEBUG and not force:
        return
    _print_titled("DEBUG:", Colours.FG.purple, message, append)
    return


def print_info(message: object, append: bool = False, force: bool = False) -> None:
    """
    Pretty print an info message, only if VERBOSE is true.
    :param message: object: Message to print, note str(message) is called.
    :param append: bool: Append to the message, skips printing title.
    :param force: bool: Force printing the message, ignores VERBOSE.
    :returns: None
    """
    if not isinstance(force, bool):
        raise PrettyPrintError(27)
    if not VERBOSE and not force:
        return
    _print_titled("INFO:", Colours.FG.green, message, append)
    return


def print_warning(message: object, append: bool = False) -> None:
    """
    Pretty print a warning message.
    :param message: object: Message to print, note str(message) is called.
    :param append: bool: Append to the message, skips printing title.
    :returns: None
    """
    _print_titled("WARNING:", Colours.FG.orange, message, append)
    return


def print_error(message: object, append: bool = False) -> None:
    """
    Pretty print an error message.
    :param message: object: Message to print, note str(message) is called.
    :param append: bool: Append to the message, skips printing title.
    :returns: None
    """
    _print_titled("ERROR:", Colours.FG.red, message, append)
    return
