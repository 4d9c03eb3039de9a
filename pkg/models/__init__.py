# modelsパッケージをインポートする際に主要な型を利用可能にする
from .grid_calculus import ComplexField, GridDomain, MatrixField
from .higgs_local import BBSliceData, FixedPointData
from .conformal_limit import LaurentConnectionFamily, SecondaryHiggsData

__all__ = ['ComplexField', 'GridDomain', 'MatrixField', 'BBSliceData', 'FixedPointData',
           'LaurentConnectionFamily', 'SecondaryHiggsData']
