import abc
import warnings
from collections import OrderedDict, namedtuple
from typing import Any, Callable, Dict, List, Optional, Tuple


Registration = namedtuple('Registration', ['func', 'retired', 'experimental'])


class BaseManager(abc.ABC):
    r"""
    Registry of named callables (saliency methods, labeling functions).

    Registration order is kept: `modes` lists names in the order their
    decorators ran, which is the order labeling functions vote in.
    Subclasses map a request (usually a user-given name) to a mode with
    `get_mode`.
    """
    collection: Dict[str, Registration]

    def __init__(self):
        self.collection = OrderedDict()

    def register(self,
            mode: str,
            retired: bool = False,
            skip_if_exists: bool = False,
            experimental: bool = False,
            ):
        def wrap_func(func: Callable):
            if mode in self.collection:
                if skip_if_exists:
                    warnings.warn(f'Mode "{mode}" was already registered. Skip')
                    return func
                warnings.warn(f'Mode "{mode}" was already registered. Overwrite')
            self.collection[mode] = Registration(func, retired, experimental)
            return func
        return wrap_func

    @abc.abstractmethod
    def get_mode(self, request: Any) -> Optional[str]:
        raise NotImplementedError()

    def get_func(self, request: Any) -> Tuple[Optional[str], Optional[Callable]]:
        r""" (mode, callable); the callable is None for an unknown mode """
        mode = self.get_mode(request)
        entry = self.collection.get(mode)
        if entry is None:
            warnings.warn(f'Mode "{mode}" is not implemented.')
            return mode, None
        if entry.retired:
            warnings.warn(f'Mode "{mode}" is retired.')
        if entry.experimental:
            warnings.warn(f'Implementation of "{mode}" mode is experimental, no test yet.')
        return mode, entry.func

    @property
    def modes(self) -> List[str]:
        return list(self.collection.keys())
