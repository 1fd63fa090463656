"""CT image features and outcome prediction for COVID-19 patients.

Modules
-------
volume_io    volumes, masks and the EHR table
segment      thresholding, connected components, baseline lung segmentation
features     the nine image features and the 11-feature vector
classifiers  from-scratch classifiers, SMOTE and Gini importance
evaluation   leave-one-patient-out experiments, ROC/AUC, correlations
phantom      synthetic cohorts with known ground truth
cli          command-line entry points
"""

__version__ = "0.1.0"
