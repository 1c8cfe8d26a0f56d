try:
    from importlib.metadata import version
except (ImportError, ModuleNotFoundError):
    from importlib_metadata import version
try:
    __version__ = version(__name__)
except:
    __version__ = ''

from .errors import *
from .numeric import *
from .model import *
from .micronet import *
from .backends import *
from .preprocessing import *
from .saliency import *
from .tcav import *
from .fusion import *
from .trigger import *
from .labeling import *
from .detection import *
from .evaluation import *
from .config import *
from .imageio import *
from .scan import *
from .overlay import *
from .report import *
from .pipeline import *

from .formats import is_image_file
