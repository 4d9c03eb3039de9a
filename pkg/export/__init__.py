from .report_exporter import ReportExporter, write_diagnostic

__all__ = ['ReportExporter', 'write_diagnostic']
