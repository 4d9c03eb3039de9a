# controllersパッケージをインポートする際にExperimentControllerを利用可能にする
from .experiment_controller import ExperimentConfig, ExperimentController

__all__ = ['ExperimentConfig', 'ExperimentController']
