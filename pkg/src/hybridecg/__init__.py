"""ECG heartbeat classification with time and spectrum inputs plus RR features.

The package reads MIT-BIH style WFDB records, cuts annotated beats into
260-sample windows, balances the training split with SMOTE and trains four
small convolutional networks implemented directly in numpy.
"""

__version__ = "0.1.0"
