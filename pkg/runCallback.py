#!/usr/bin/env python3
"""
File: runCallback.py
    Callbacks as (callable, params) pairs, run with primary arguments first and the stored params after.
    Training hands every epoch callback (epoch, model, epoch_summary).
"""
import logging
from enum import IntEnum
from typing import Any, Callable, Final, Iterable, Optional

from cliExceptions import Error

###############################
# Constants:
###############################
_VERSION: Final[str] = "2.0.0"
"""The runCallback version."""

Callback = Optional[tuple[Callable[..., Any], Optional[Iterable[Any]]]]
"""A callable and the extra params it gets after the primary arguments."""

###############################
# Variables:
###############################
_SUPPRESS_ERROR: bool = True
"""Return callback failures as CallbackError instead of raising them."""


def version() -> str:
    global _VERSION
    return _VERSION


def get_suppress_error() -> bool:
    """
    Are callback failures returned (True) or raised (False)?
    :returns: bool: The current state.
    """
    global _SUPPRESS_ERROR
    return _SUPPRESS_ERROR


def set_suppress_error(value: bool) -> None:
    """
    Setter for get_suppress_error().
    :raises TypeError: If value is not a bool.
    :returns: None.
    """
    global _SUPPRESS_ERROR
    if not isinstance(value, bool):
        raise TypeError("'suppress_error' value, must be a bool.")
    _SUPPRESS_ERROR = value
    return


class CallbackIndex(IntEnum):
    CALLABLE = 0
    PARAMS = 1


class CallbackError(Error):
    """
    Exception to throw when a callback raises.
    """
    def __init__(self, cb_callable: Callable[..., Any], cb_params: Iterable[Any], cb_error: Exception) -> None:
        """
        :param cb_callable: Callable: The callable that raised.
        :param cb_params: Iterable[Any]: Everything it was called with.
        :param cb_error: Exception: What it raised.
        """
        self._callable: Callable[..., Any] = cb_callable
        self._params: tuple[Any, ...] = (*cb_params,)
        self._error: Exception = cb_error
        error_message: str = ("Callback '%s' raised %s: %s"
                              % (self.callable_name, type(cb_error).__name__, str(cb_error.args)))
        super().__init__(error_message)
        return

    @property
    def callable_name(self) -> str:
        return getattr(self._callable, '__name__', repr(self._callable))

    @property
    def params(self) -> tuple[Any, ...]:
        return self._params

    @property
    def error(self) -> Exception:
        return self._error


def __type_check_callback__(callback: Callback) -> tuple[bool, str]:
    """
    Type-check a callback.
    :param callback: Callback: The callback to check.
    :returns: tuple[bool, str]: (passed, 'SUCCESS' or what failed).
    """
    if callback is None:
        return True, 'SUCCESS'
    if not isinstance(callback, tuple) or len(callback) != 2:
        return False, 'callback is not a 2-tuple'
    if not callable(callback[CallbackIndex.CALLABLE]):
        return False, 'callback[0] is not Callable'
    params = callback[CallbackIndex.PARAMS]
    if params is not None and not isinstance(params, Iterable):
        return False, 'callback[1] is not None | Iterable'
    return True, 'SUCCESS'


def __run_callback__(callback: Callback, *cb_params) -> Optional[Any] | CallbackError:
    """
    Run a callback.
    :param callback: Callback: None, or (callable, params).
    :param cb_params: tuple[Any, ...]: Primary arguments, passed before the stored params.
    :raises CallbackError: If the callback raises and errors are not suppressed.
    :returns: Optional[Any] | CallbackError: The callback's return value, or the suppressed CallbackError.
    """
    global _SUPPRESS_ERROR
    logger: logging.Logger = logging.getLogger(__name__ + '.' + __run_callback__.__name__)
    if callback is None:
        return None
    params: tuple[Any, ...] = (*cb_params,)
    if callback[CallbackIndex.PARAMS] is not None:
        params = (*cb_params, *callback[CallbackIndex.PARAMS])
    try:
        return callback[CallbackIndex.CALLABLE](*params)
    except Exception as e:
        callback_error: CallbackError = CallbackError(callback[CallbackIndex.CALLABLE], params, e)
        if _SUPPRESS_ERROR:
            logger.warning(callback_error.message)
            return callback_error
        raise callback_error
