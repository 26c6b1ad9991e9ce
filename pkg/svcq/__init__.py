from importlib.metadata import PackageNotFoundError as _PackageNotFoundError
from importlib.metadata import version as _version

try:
    __version__ = _version("svcq")
except _PackageNotFoundError:
    __version__ = "0.0.0"
version_info = tuple(int(part) for part in __version__.split(".")[:3] if part.isdigit())
