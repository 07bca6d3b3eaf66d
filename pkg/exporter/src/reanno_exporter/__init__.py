from .backends import HashBackend, get_backend
from .datasets import read_dataset
from .examples import ExporterError, ExporterExample
from .export import encode_and_export, encode_example
from .schemes import build_prompt, mark_entities, strip_markers
from .templates import generate_template
from .truncate import TruncationResult, truncate_document

__version__ = "0.1.0"
