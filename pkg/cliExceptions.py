#!/usr/bin/env python3
"""
File: cliExceptions.py
    Store Exceptions to throw.
"""
from typing import Optional, Sequence


class Error(Exception):
    """
    Base error class.
    """
    def __init__(self, message: str, *args) -> None:
        """
        Initialize an Error
        :param message: str: The error message.
        :param args: Any additional arguments to store in the exception.
        """
        super().__init__(message, *args)
        self._message: str = message
        return

    @property
    def message(self) -> str:
        """
        Return the message of the error.
        :return: str: The message.
        """
        return self._message


class ParameterError(Error):
    """
    Exception to throw when there is a parameter error.
    """
    def __init__(self, param_name: str, conflict_message: str, *args) -> None:
        """
        Initialize a ParameterError.
        :param param_name: str: The name of the parameter.
        :param conflict_message: str: The error / conflict message.
        :param args: Any additional arguments to store in the exception.
        """
        error_message: str = "Error with parameter: '%s', Message: '%s'." % (param_name, conflict_message)
        super().__init__(error_message, *args)
        self._param_name: str = param_name
        self._conflict_message: str = conflict_message
        return

    @property
    def param_name(self) -> str:
        """
        Parameter name that caused the conflict.
        :return: str: The parameter name.
        """
        return self._param_name

    @property
    def conflict_message(self) -> str:
        """
        The message associated with the conflict.
        :return: str: The conflict message.
        """
        return self._conflict_message


class DimensionError(Error):
    """
    Exception to throw when tensor extents don't line up.
    """
    def __init__(self, operation: str, shapes: Sequence[tuple[int, ...]], *args) -> None:
        """
        Initialize a DimensionError.
        :param operation: str: The operation that received the bad shapes.
        :param shapes: Sequence[tuple[int, ...]]: Every shape involved, in argument order.
        :param args: Any additional arguments to store in the exception.
        """
        shape_strings: str = ' vs '.join(str(tuple(shape)) for shape in shapes)
        error_message: str = "Dimension mismatch in '%s': %s." % (operation, shape_strings)
        super().__init__(error_message, *args)
        self._operation: str = operation
        self._shapes: tuple[tuple[int, ...], ...] = tuple(tuple(shape) for shape in shapes)
        return

    @property
    def operation(self) -> str:
        """
        The operation that failed.
        :return: str: The operation name.
        """
        return self._operation

    @property
    def shapes(self) -> tuple[tuple[int, ...], ...]:
        """
        The offending shapes.
        :return: tuple[tuple[int, ...], ...]: The shapes.
        """
        return self._shapes


class ContractError(Error):
    """
    Exception to throw when a call violates an operation's precondition.
    """
    def __init__(self, operation: str, reason: str, *args) -> None:
        """
        Initialize a ContractError.
        :param operation: str: The operation called.
        :param reason: str: What precondition was broken.
        :param args: Any additional arguments to store in the exception.
        """
        error_message: str = "Contract violated by '%s': %s" % (operation, reason)
        super().__init__(error_message, *args)
        self._operation: str = operation
        self._reason: str = reason
        return

    @property
    def operation(self) -> str:
        """
        The operation called.
        :return: str: The operation name.
        """
        return self._operation

    @property
    def reason(self) -> str:
        """
        The broken precondition.
        :return: str: The reason.
        """
        return self._reason


class VocabularyError(Error):
    """
    Exception to throw when a word or token id is outside the vocabulary.
    """
    def __init__(self, item: str | int, *args) -> None:
        """
        Initialize a VocabularyError.
        :param item: str | int: The unknown word or id.
        :param args: Any additional arguments to store in the exception.
        """
        super().__init__("Not in vocabulary: %r." % (item,), *args)
        self._item: str | int = item
        return

    @property
    def item(self) -> str | int:
        """
        The unknown word or id.
        :return: str | int: The item.
        """
        return self._item


class GenerationError(Error):
    """
    Exception to throw when a scene with an unambiguous referent can't be produced.
    """
    def __init__(self, seed: int, attempts: int, *args) -> None:
        """
        Initialize a GenerationError.
        :param seed: int: The scene seed.
        :param attempts: int: How many attempts were made.
        :param args: Any additional arguments to store in the exception.
        """
        error_message: str = "Scene seed %i: no unambiguous referent after %i attempts." % (seed, attempts)
        super().__init__(error_message, *args)
        self._seed: int = seed
        self._attempts: int = attempts
        return

    @property
    def seed(self) -> int:
        """
        The scene seed.
        :return: int: The seed.
        """
        return self._seed

    @property
    def attempts(self) -> int:
        """
        The number of attempts made.
        :return: int: The attempt count.
        """
        return self._attempts


class NonFiniteLossError(Error):
    """
    Exception to throw when a loss term turns NaN or Inf.
    """
    def __init__(self, term: str, step: Optional[int] = None, *args) -> None:
        """
        Initialize a NonFiniteLossError.
        :param term: str: The first non-finite loss term.
        :param step: Optional[int]: The optimizer step, if known.
        :param args: Any additional arguments to store in the exception.
        """
        error_message: str = "Loss term '%s' is not finite" % term
        if step is not None:
            error_message += " at step %i" % step
        super().__init__(error_message + '.', *args)
        self._term: str = term
        self._step: Optional[int] = step
        return

    @property
    def term(self) -> str:
        """
        The first non-finite term.
        :return: str: The term name.
        """
        return self._term

    @property
    def step(self) -> Optional[int]:
        """
        The step the term went non-finite at.
        :return: Optional[int]: The step.
        """
        return self._step


class CheckpointError(Error):
    """
    Exception to throw when a checkpoint can't be read.
    """
    def __init__(self, path: str, offset: int, reason: str, *args) -> None:
        """
        Initialize a CheckpointError.
        :param path: str: The checkpoint path.
        :param offset: int: The byte offset the problem was found at.
        :param reason: str: What went wrong.
        :param args: Any additional arguments to store in the exception.
        """
        error_message: str = "Checkpoint '%s' unreadable at offset %i: %s" % (path, offset, reason)
        super().__init__(error_message, *args)
        self._path: str = path
        self._offset: int = offset
        self._reason: str = reason
        return

    @property
    def path(self) -> str:
        """
        The checkpoint path.
        :return: str: The path.
        """
        return self._path

    @property
    def offset(self) -> int:
        """
        The byte offset of the problem.
        :return: int: The offset.
        """
        return self._offset

    @property
    def reason(self) -> str:
        """
        What went wrong.
        :return: str: The reason.
        """
        return self._reason
