"""Desk-scale workbench for adapting a causal language model to a new
language: corpus cleaning, byte-level BPE tokenizer training, embedding
transplant, continual pretraining, and two evaluation methodologies."""

from .bpe import TokenizerTrainConfig, Vocab, fertility, train_bpe
from .corpus import (
    CleanerConfig,
    CorpusStats,
    Document,
    NgramModel,
    clean,
    ingest,
    perplexity,
    split,
    stats,
)
from .fewshot import EvalResult, Task, TaskItem, build_prompt, evaluate, score_choice
from .humeval import (
    Annotation,
    AnnotationStore,
    Experiment,
    SelectionConfig,
    SplitStrategy,
    aggregate,
    assign_evaluators,
    build_experiment,
    build_latin_square,
    select_texts,
    split_text,
)
from .model import Checkpoint, GenerateConfig, ModelConfig, backward, forward, generate, loss
from .tensorio import load_tensors, save_tensors
from .training import OptimizerConfig, TrainConfig, adam_step, lr_at, make_batches, train
from .transplant import align_vocabs, transplant_embeddings, transplant_model

__version__ = "0.1.0"
