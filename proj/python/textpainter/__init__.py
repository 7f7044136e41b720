from ._textpainter import *  # noqa: F401,F403
from ._textpainter import __version__  # noqa: F401
