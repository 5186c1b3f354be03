"""Unsupervised document embeddings trained with contrastive augmentation.

The encoder is the mean of a document's word vectors; training couples a
CBOW-with-document objective (negative sampling, corruption) with a
contrastive loss over stochastically augmented documents. Evaluation probes
frozen embeddings with linear classification and k-means clustering.
"""

# the augment() entry point stays namespaced (docembed.augment.augment) so the
# submodule is not shadowed by a same-named attribute
from .augment import (
    AugmentStrategy,
    AugmentationLexicon,
    LexiconError,
    antonym_negate,
    augmentation_rng,
    backtranslate_lookup,
    load_lexicon,
    synonym_replace,
    uninformative_replace,
)
from .checkpoint import Checkpoint, CheckpointError, hash_vocab, load_checkpoint, save_checkpoint
from .contrastive import (
    ContrastiveConfig,
    PredictorWeights,
    combined_loss,
    cosine_similarity,
    nt_xent_loss,
    predictor_forward,
    simsiam_loss,
)
from .corpus import (
    Corpus,
    CorpusError,
    EmptyDocumentError,
    EmptyVocabularyError,
    SparseBow,
    TokenizedDocument,
    TokenizerRules,
    Vocabulary,
    build_vocab,
    load_corpus,
    load_labeled_corpus,
    to_bow,
    tokenize,
)
from .encoder import (
    ModelParams,
    NoiseDistribution,
    TrainingWindow,
    WindowSet,
    embed_document,
    init_params,
    negsample_loss_grad,
    sample_windows,
    softmax_probability,
)
from .evaluation import (
    EmbeddingSet,
    EvalReport,
    classification_error,
    embed_corpus,
    export_embeddings,
    fit_logistic_regression,
    import_embeddings,
    kmeans_cluster,
    nmi,
)
from .trainer import (
    PRESETS,
    ConfigError,
    TrainConfig,
    Trainer,
    TrainingDivergedError,
    apply_preset,
    optimizer_step,
    train,
)

__version__ = "0.1.0"
