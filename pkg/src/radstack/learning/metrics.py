"""Model-quality metric registry: radiologists pick one of these names and a
threshold to define maturity for proposal serving."""

from radstack.core.mask import overlap_metrics


def mask_dice(predicted, truth):
    return overlap_metrics(predicted, truth).dice


def mask_iou(predicted, truth):
    return overlap_metrics(predicted, truth).iou


def label_accuracy(predicted_labels, truth_labels):
    """Fraction of truth label slots the prediction reproduces."""
    if not truth_labels:
        return 1.0
    hits = sum(1 for k, v in truth_labels.items() if predicted_labels.get(k) == v)
    return hits / len(truth_labels)


METRICS = {
    "dice": mask_dice,
    "iou": mask_iou,
    "label_accuracy": label_accuracy,
}
