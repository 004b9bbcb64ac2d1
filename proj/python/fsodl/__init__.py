"""FSO link simulation over Gamma-Gamma turbulence with learned transceiver blocks."""

from ._fsodl import *  # noqa: F401,F403
from ._fsodl import __doc__ as _core_doc

__doc__ = _core_doc
