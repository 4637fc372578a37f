"""Model extraction from (robust) counterfactual explanations of linear classifiers."""
