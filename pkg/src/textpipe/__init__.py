"""textpipe: a distributed document-analysis platform.

Documents uploaded into corpora flow through a DAG of analysis workers
(extraction, language detection, tokenization, frequency, n-grams, POS
tagging, statistics, indexing); results are cached per document, searchable
through a positional full-text index, and served over a REST API.
"""

__version__ = "0.1.0"

from .model import (  # noqa: F401
    AnalysisResult,
    Corpus,
    Document,
    Job,
    PipelineSpec,
    new_document,
    validate_analysis_value,
)
from .worker import Registry, WorkerDescriptor, WorkerInput  # noqa: F401
