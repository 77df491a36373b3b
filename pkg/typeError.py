#!/usr/bin/env python3
"""
File: typeError.py
    Logged TypeErrors for the places where model code accepts loosely typed input: module registration
    and state dicts headed for, or coming from, a checkpoint.
"""
import logging
from typing import Any, NoReturn

import numpy as np

_USE_LOGGING: bool = True
"""Log the TypeError at critical level before raising it."""


def set_use_logging(value: bool) -> None:
    """
    Turn logging of type errors on or off.
    :param value: bool: True logs, False only raises.
    :returns: None.
    :raises TypeError: If value is not a bool.
    """
    global _USE_LOGGING
    if not isinstance(value, bool):
        raise TypeError("'use_logging' must be a bool.")
    _USE_LOGGING = value
    return


def __type_error__(argument_name: str, desired_types: str, received_obj: Any, *args) -> NoReturn:
    """
    Raise a TypeError naming the argument, what was received and what was expected.
    :param argument_name: str: The argument name.
    :param desired_types: str: The expected type(s), as text.
    :param received_obj: Any: What was received; type() is called on it.
    :param args: Any: Passed on to the TypeError.
    :return: NoReturn
    """
    error_message: str = "TypeError: Argument: '%s', received '%s' type, expected type(s): '%s'." \
                         % (argument_name, type(received_obj).__name__, desired_types)
    if _USE_LOGGING:
        logger: logging.Logger = logging.getLogger(__name__ + '.' + __type_error__.__name__)
        logger.critical(error_message)
    raise TypeError(error_message, *args)


def check_state_dict(state: Any, argument_name: str = 'state') -> dict[str, np.ndarray]:
    """
    Check a state dict is str -> numeric ndarray.
    :param state: Any: The candidate state dict.
    :param argument_name: str: Name used in the error message.
    :return: dict[str, np.ndarray]: The same dict.
    :raises TypeError: On a non-dict, a non-str key or a non-numeric value.
    """
    if not isinstance(state, dict):
        __type_error__(argument_name, 'dict[str, np.ndarray]', state)
    for name, values in state.items():
        if not isinstance(name, str):
            __type_error__(argument_name + ' key', 'str', name)
        if not isinstance(values, np.ndarray) or values.dtype.kind not in 'fiu':
            __type_error__("%s['%s']" % (argument_name, name), 'numeric np.ndarray', values)
    return state
