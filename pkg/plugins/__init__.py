# Pythonに対して 'plugins' ディレクトリがパッケージであることを示します。
# 実験プラグイン (plugins/experiments/*.py) は PluginManager がファイルから直接読み込みます。

from .base_experiment_plugin import ExperimentContext, ExperimentPlugin, ExperimentResult

__all__ = ['ExperimentContext', 'ExperimentPlugin', 'ExperimentResult']
