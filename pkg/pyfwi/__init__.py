"""pyfwi

A Python research toolbox for full waveform inversion with
quadratic-Wasserstein misfits.
"""

__version__ = '0.1.0'

_max_threads = None

def get_max_threads():
    """Number of worker threads used for per-source tasks."""
    global _max_threads
    if not _max_threads:
        import multiprocessing
        _max_threads = multiprocessing.cpu_count()
    return _max_threads

def set_max_threads(num):
    global _max_threads
    if num is not None and num < 1:
        raise ValueError('invalid thread count %s' % num)
    _max_threads = num
