"""Reference oracle server for the summarizer wire protocol."""

from .reference_model import load_feature_file, reference_model
from .server import ServerState, handle_message, serve, serve_stream

__version__ = "0.1.0"
