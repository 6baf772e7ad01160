"""Android malware detection toolkit.

Static APK features, dynamic trace features, matrix encodings, feature
selection, from-scratch classifiers, cross-validated evaluation with rank
statistics, and majority-vote ensembles, plus a pipeline CLI (``droidml``).
"""

from . import errors
from .apk import CallGraph, load_call_graph, parse_apk
from .axml import ManifestModel, parse_manifest
from .base import Estimator
from .dex import DexFile, parse_dex
from .dyntrace import (
    DynamicApiLog,
    SyscallTrace,
    dynamic_api_records,
    parse_api_log,
    parse_strace,
    syscall_records,
)
from .encoding import (
    FeatureMatrix,
    FrequencyEncoder,
    MatrixKind,
    NgramEncoder,
    SequenceEncoder,
    UsageEncoder,
    Vocabulary,
    api_sequence,
    build_token_vocab,
    build_vocab,
    concat_matrices,
    encode_frequency,
    encode_sequence,
    encode_usage,
    extract_api_routes,
    ngrams,
    tcp_feature_matrix,
)
from .ensemble import enumerate_ensembles, vote
from .evaluation import (
    ConfusionMatrix,
    compare_models,
    cross_validate,
    dunns_test,
    kruskal_wallis,
    metrics_from_confusion,
    stratified_kfold,
)
from .featsel import (
    SailsSelector,
    ScoreSelector,
    VarianceSelector,
    chi_square,
    mutual_information,
    pearson,
    sails,
    select_top_k,
    t_test,
    variance_threshold,
    wfs,
)
from .models import (
    DecisionTree,
    KNearestNeighbors,
    LinearSVM,
    LogisticRegression,
    NaiveBayes,
    RandomForest,
    grid_search,
    load_model,
    make_model,
    save_model,
)
from .pcap import (
    TCP_FEATURE_NAMES,
    TcpFlowFeatures,
    extract_http_features,
    extract_tcp_features,
)
from .records import FeatureKind, FeatureRecord, FeatureReport, MethodRef, Source

__version__ = "0.1.0"

__all__ = [
    "CallGraph",
    "ConfusionMatrix",
    "DecisionTree",
    "DexFile",
    "DynamicApiLog",
    "Estimator",
    "FeatureKind",
    "FeatureMatrix",
    "FeatureRecord",
    "FeatureReport",
    "FrequencyEncoder",
    "KNearestNeighbors",
    "LinearSVM",
    "LogisticRegression",
    "ManifestModel",
    "MatrixKind",
    "MethodRef",
    "NaiveBayes",
    "NgramEncoder",
    "RandomForest",
    "SailsSelector",
    "ScoreSelector",
    "SequenceEncoder",
    "Source",
    "SyscallTrace",
    "TCP_FEATURE_NAMES",
    "TcpFlowFeatures",
    "UsageEncoder",
    "VarianceSelector",
    "Vocabulary",
    "api_sequence",
    "build_token_vocab",
    "build_vocab",
    "chi_square",
    "compare_models",
    "concat_matrices",
    "cross_validate",
    "dunns_test",
    "dynamic_api_records",
    "encode_frequency",
    "encode_sequence",
    "encode_usage",
    "enumerate_ensembles",
    "errors",
    "extract_api_routes",
    "extract_http_features",
    "extract_tcp_features",
    "grid_search",
    "kruskal_wallis",
    "load_call_graph",
    "load_model",
    "make_model",
    "metrics_from_confusion",
    "mutual_information",
    "ngrams",
    "parse_apk",
    "parse_api_log",
    "parse_dex",
    "parse_manifest",
    "parse_strace",
    "pearson",
    "sails",
    "save_model",
    "select_top_k",
    "stratified_kfold",
    "syscall_records",
    "t_test",
    "tcp_feature_matrix",
    "variance_threshold",
    "vote",
    "wfs",
]
