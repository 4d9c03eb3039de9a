from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any

if TYPE_CHECKING:
    from controllers.experiment_controller import ExperimentConfig
    from controllers.pipeline_builder import PipelineBuilder
    from export.report_exporter import ReportExporter


@dataclass
class ExperimentContext:
    """プラグインの run() に渡される実行環境。"""
    config: 'ExperimentConfig'
    exporter: 'ReportExporter'
    pipeline: 'PipelineBuilder'
    threads: int = 1


@dataclass
class ExperimentResult:
    """
    プラグインの実行結果。summary はマニフェストと records.jsonl の要約レコードに、
    gates はマニフェストのゲート欄にそのまま書き出されます。
    """
    summary: dict[str, Any] = field(default_factory=dict)
    gates: dict[str, Any] = field(default_factory=dict)
    conventions: dict[str, Any] = field(default_factory=dict)
    status: str = "ok"


# 複数のコマンドが共通に読む設定キー
SLICE_PARAMETERS = [
    {'name': 'slice.delta_gate', 'type': 'float', 'default': None, 'range': (0.0, None)},
    {'name': 'slice.dprime_sign', 'type': 'choice', 'default': 1, 'choices': (1, -1)},
    {'name': 'slice.phi3_mode', 'type': 'choice', 'default': 'dbar', 'choices': ('dbar', 'nilpotent')},
    {'name': 'slice.sweeps', 'type': 'int', 'default': 3, 'range': (0, 100)},
]

LOOP_PARAMETERS = [
    {'name': 'loop.kind', 'type': 'choice', 'default': 'auto', 'choices': ('auto', 'horizontal', 'sinusoidal')},
    {'name': 'loop.nt', 'type': 'int', 'default': 256, 'range': (8, None)},
    {'name': 'loop.orientation', 'type': 'choice', 'default': 1, 'choices': (1, -1)},
    {'name': 'loop.margin_gate', 'type': 'float', 'default': 1e-3, 'range': (0.0, None)},
]

WKB_PARAMETERS = [
    {'name': 'wkb.eps_values', 'type': 'list', 'default': [0.2, 0.1, 0.05, 0.025]},
    {'name': 'wkb.substeps', 'type': 'int', 'default': 4096, 'range': (1, None)},
    {'name': 'wkb.curvature_gate', 'type': 'float', 'default': 5e-2, 'range': (0.0, None)},
]


class ExperimentPlugin(ABC):
    """
    CLI コマンド 1 つに対応する実験プラグインの抽象基底クラス。
    plugins/experiments/ 以下に置いたサブクラスは PluginManager が自動で読み込みます。
    """

    @property
    @abstractmethod
    def name(self) -> str:
        """コマンド名 (例: "solve-hitchin", "wkb-sweep")。"""
        pass

    @property
    def description(self) -> str:
        return ""

    @abstractmethod
    def get_parameters_definition(self) -> list:
        """
        このコマンドが読む設定キーの定義をリストで返します。各要素は次の形式の辞書です。
        [
            {
                'name': 'slice.delta_gate',   # ドット区切りの設定キー
                'type': 'float',
                'default': 1e-6,
                'range': (0.0, None),          # 任意
            },
        ]
        'default' は設定ファイルに値が無いときに ExperimentConfig が補います。
        """
        pass

    @abstractmethod
    def run(self, context: ExperimentContext) -> ExperimentResult:
        """実験を実行し、表と画像を context.exporter に書き出して結果を返します。"""
        pass
