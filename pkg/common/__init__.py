from .errors import ToolkitError
from .utils import get_device, derive_seed
