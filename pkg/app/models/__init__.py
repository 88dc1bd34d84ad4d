"""Domain models package."""
from app.models.labels import Category, ViolationLabels, KeyIndex, category_of
from app.models.labeled import LabeledCorpus
from app.models.trace import OpType, KeyRecord, CryptoOperation, Trace, Corpus, OPERATION_COLUMNS
from app.models.gen_config import GenConfig
from app.models.flow import FlowTable, FeatureMatrix, Scaler, SplitManifest, FLOW_FEATURES
from app.models.intent import IntentKind, IntentSpec, ONE_HOT_ORDER
from app.models.report import EvalReport
from app.models.run_config import TrainConfig, IsolationForestConfig, RunConfig

__all__ = [
    "Category",
    "ViolationLabels",
    "KeyIndex",
    "category_of",
    "LabeledCorpus",
    "OpType",
    "KeyRecord",
    "CryptoOperation",
    "Trace",
    "Corpus",
    "OPERATION_COLUMNS",
    "GenConfig",
    "FlowTable",
    "FeatureMatrix",
    "Scaler",
    "SplitManifest",
    "FLOW_FEATURES",
    "IntentKind",
    "IntentSpec",
    "ONE_HOT_ORDER",
    "EvalReport",
    "TrainConfig",
    "IsolationForestConfig",
    "RunConfig",
]
