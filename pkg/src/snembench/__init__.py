"""Build and solve synthetic transmission-network benchmark cases."""

from snembench.matpower import parse_matpower, read_matpower, save_matpower, write_matpower
from snembench.netmodel import NetworkModel

__all__ = ["NetworkModel", "parse_matpower", "read_matpower", "save_matpower", "write_matpower"]
__version__ = "0.1.0"
