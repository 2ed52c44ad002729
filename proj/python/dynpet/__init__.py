"""Dynamic PET listmode simulation and optimal-transport reconstruction."""

from dynpet._dynpet import *  # noqa: F401,F403
from dynpet._dynpet import __doc__  # noqa: F401
