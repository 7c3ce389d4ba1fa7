"""Utility functions."""

import concurrent.futures
import datetime

import numpy as np


def timestamp():
    """
    Get the current time.

    Returns the current time in the form YYYY-mm-ddTHH:MM:SS+00:00
    """
    return datetime.datetime.now(datetime.timezone.utc).strftime(
        '%Y-%m-%dT%H:%M:%S+00:00')


def cell_chunks(n_cells, threads):
    """
    Split a cell range into contiguous chunks, one per thread.

    n_cells -- number of cells
    threads -- number of worker threads

    Returns a list of slices covering range(n_cells).
    """
    threads = max(1, min(int(threads), n_cells))
    bounds = np.linspace(0, n_cells, threads + 1).astype(int)
    return [slice(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:])]


def run_chunked(n_cells, threads, func):
    """
    Run a cell-local kernel over chunks of cells.

    n_cells -- number of cells
    threads -- number of worker threads; 1 runs inline
    func -- callable taking a slice of cells; chunks must write disjoint data

    Results do not depend on the thread count since chunks never share
    output rows.
    """
    chunks = cell_chunks(n_cells, threads)
    if len(chunks) == 1:
        func(chunks[0])
        return

    with concurrent.futures.ThreadPoolExecutor(len(chunks)) as pool:
        for future in [pool.submit(func, chunk) for chunk in chunks]:
            future.result()


def format_float(value):
    """Format a float for CSV output, round-trip exact."""
    return repr(float(value))
