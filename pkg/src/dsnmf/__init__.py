"""Deep Semi-NMF, weakly-supervised factorizations and their evaluation."""
from .deep import (DeepModel, Nonlinearity, deep_cost, deep_objective, deep_seminmf, finetune,
                   finetune_linear, finetune_nonlinear, grad_deep, pretrain, reconstruct,
                   train_deep_wsf, transfer_init)
from .errors import (CorruptArchiveError, DSNMFError, InvalidInputError, NumericError, ParseError,
                     ShapeError, UnsupportedVersionError)
from .evaluation import (classification_accuracy, classify, clustering_accuracy, gen_multiattr,
                         gen_xor, kmeans, linear_classifier, nmi)
from .graphreg import AttributeGraph, AttributeLabels, build_weight_matrix, knn_graph, smoothness
from .io import extract_igo, load_matrix, load_model, save_matrix, save_model
from .numerics import nndsvd_init, pinv, pos_neg_split, safe_div, svd_seminmf_init
from .project import ProjectionResult, project_nls, project_pinv
from .shallow import FactorPair, TrainConfig, TrainReport, gnmf, nmf_mul, semi_nmf, wsf, wsf_ma

__version__ = "0.1.0"
