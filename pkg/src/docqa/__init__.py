"""Document VQA with answer localization: pipeline, metrics, service, CLI."""

__version__ = "0.1.0"
