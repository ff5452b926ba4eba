from rest_framework import serializers

from .config import NUM_CLASSES, PIXEL_MEAN, PIXEL_STD
from .models import AblationResult, EpochMetric, Evaluation, TrainingRun


# Run configuration

class StmmConfigSerializer(serializers.Serializer):
    nf = serializers.IntegerField(min_value=1)
    embed_dim = serializers.IntegerField(min_value=1)
    depths = serializers.ListField(child=serializers.IntegerField(min_value=1), min_length=1)
    num_heads = serializers.ListField(child=serializers.IntegerField(min_value=1), min_length=1)
    window_size = serializers.ListField(child=serializers.IntegerField(min_value=1), min_length=3, max_length=3)
    mlp_ratio = serializers.FloatField(min_value=0.0, default=4.0)
    patch_norm = serializers.BooleanField(default=True)
    relative_position_bias = serializers.BooleanField(default=True)

    def validate(self, attrs):
        if len(attrs['depths']) != len(attrs['num_heads']):
            raise serializers.ValidationError('depths and num_heads must have one entry per stage')
        for stage, heads in enumerate(attrs['num_heads']):
            dim = attrs['embed_dim'] * 2 ** stage
            if dim % heads:
                raise serializers.ValidationError(
                    f'stage {stage} width {dim} is not divisible by its {heads} heads'
                )
        return attrs


class HeadConfigSerializer(serializers.Serializer):
    input_dim = serializers.IntegerField(min_value=1, required=False, allow_null=True)
    lstm_cells = serializers.IntegerField(min_value=0)
    lstm_width = serializers.IntegerField(min_value=1)
    dropout = serializers.FloatField(min_value=0.0, max_value=0.999999, default=0.3)
    num_classes = serializers.IntegerField(default=NUM_CLASSES)

    def validate_num_classes(self, value):
        if value != NUM_CLASSES:
            raise serializers.ValidationError('the head is a normal/anomaly classifier with exactly 2 classes')
        return value


class InputConfigSerializer(serializers.Serializer):
    height = serializers.IntegerField(min_value=4)
    width = serializers.IntegerField(min_value=4)
    mean = serializers.ListField(child=serializers.FloatField(), min_length=3, max_length=3, default=list(PIXEL_MEAN))
    std = serializers.ListField(child=serializers.FloatField(min_value=1e-6), min_length=3, max_length=3, default=list(PIXEL_STD))

    def validate(self, attrs):
        if attrs['height'] % 4 or attrs['width'] % 4:
            raise serializers.ValidationError('input height and width must be multiples of 4')
        return attrs


class ModelConfigSerializer(serializers.Serializer):
    stmm = StmmConfigSerializer()
    head = HeadConfigSerializer()
    input = InputConfigSerializer()

    def validate(self, attrs):
        stmm = attrs['stmm']
        feature_dim = stmm['embed_dim'] * 2 ** (len(stmm['depths']) - 1)
        input_dim = attrs['head'].get('input_dim')
        if input_dim is not None and input_dim != feature_dim:
            raise serializers.ValidationError(
                {'head': f'input_dim {input_dim} does not match the STMM feature width {feature_dim}'}
            )
        return attrs


class TrainConfigSerializer(serializers.Serializer):
    batch_size = serializers.IntegerField(min_value=1, default=8)
    vcl = serializers.IntegerField(min_value=1, default=8)
    learning_rate = serializers.FloatField(min_value=0.0, default=0.0001)
    momentum = serializers.FloatField(min_value=0.0, max_value=0.999999, default=0.9)
    epochs = serializers.IntegerField(min_value=1, default=1)
    class_weights = serializers.ListField(
        child=serializers.FloatField(), min_length=2, max_length=2,
        required=False, allow_null=True, default=None,
    )
    carry_state = serializers.BooleanField(default=False)
    steps_per_epoch = serializers.IntegerField(min_value=1, required=False, allow_null=True, default=None)
    eval_every = serializers.IntegerField(min_value=1, default=1)
    grad_clip = serializers.FloatField(min_value=0.0, required=False, allow_null=True, default=None)

    def validate_class_weights(self, value):
        if value is not None and any(weight <= 0 for weight in value):
            raise serializers.ValidationError('class weights must be positive')
        return value

    def validate_grad_clip(self, value):
        if value is not None and value <= 0:
            raise serializers.ValidationError('grad_clip must be positive')
        return value


class DataConfigSerializer(serializers.Serializer):
    train_root = serializers.CharField(required=False, allow_null=True, default=None)
    eval_root = serializers.CharField(required=False, allow_null=True, default=None)
    train_split = serializers.CharField(required=False, allow_null=True, default=None)
    eval_split = serializers.CharField(required=False, allow_null=True, default=None)


class RunConfigSerializer(serializers.Serializer):
    name = serializers.CharField(default='run')
    seed = serializers.IntegerField(min_value=0, default=0)
    model = ModelConfigSerializer()
    train = TrainConfigSerializer()
    data = DataConfigSerializer()
    output_dir = serializers.CharField(required=False, allow_null=True, default=None)

    def to_internal_value(self, data):
        # Missing sections take their field defaults
        data = dict(data)
        for section in ('train', 'data'):
            if data.get(section) is None:
                data[section] = {}
        return super().to_internal_value(data)


# Data

class VideoAnnotationSerializer(serializers.Serializer):
    """One DoTA metadata record (``annotations/<video>.json``)"""
    video_name = serializers.CharField()
    num_frames = serializers.IntegerField(min_value=1)
    anomaly_start = serializers.IntegerField(min_value=0)
    anomaly_end = serializers.IntegerField(min_value=0)
    anomaly_class = serializers.CharField()
    ego_involve = serializers.BooleanField(required=False, allow_null=True, default=None)
    accident_id = serializers.IntegerField(required=False, allow_null=True, default=None)

    def validate(self, attrs):
        if attrs['anomaly_start'] > attrs['anomaly_end']:
            raise serializers.ValidationError(
                f"anomaly_start {attrs['anomaly_start']} is after anomaly_end {attrs['anomaly_end']}"
            )
        if attrs['anomaly_end'] >= attrs['num_frames']:
            raise serializers.ValidationError(
                f"anomaly_end {attrs['anomaly_end']} is outside a {attrs['num_frames']}-frame video"
            )
        return attrs


class SyntheticSpecSerializer(serializers.Serializer):
    SIGNALS = ['appearance', 'motion']

    num_videos = serializers.IntegerField(min_value=1)
    frames_per_video = serializers.IntegerField(min_value=2)
    height = serializers.IntegerField(min_value=8)
    width = serializers.IntegerField(min_value=8)
    signal = serializers.ChoiceField(choices=SIGNALS, default='appearance')
    long_range = serializers.BooleanField(default=False)
    min_window = serializers.IntegerField(min_value=1)
    max_window = serializers.IntegerField(min_value=1)
    cue_length = serializers.IntegerField(min_value=1, default=2)
    min_cue_gap = serializers.IntegerField(min_value=1, default=8)
    ego_fraction = serializers.FloatField(min_value=0.0, max_value=1.0, default=0.5)
    seed = serializers.IntegerField(min_value=0, default=0)

    def validate(self, attrs):
        if attrs['min_window'] > attrs['max_window']:
            raise serializers.ValidationError('min_window must not exceed max_window')
        return attrs


# Evaluation

class AblationGridSerializer(serializers.Serializer):
    AXES = ['nf', 'lstm_cells', 'vcl', 'memory_onoff']

    axis = serializers.ChoiceField(choices=AXES)
    values = serializers.ListField(min_length=1)
    base = serializers.CharField(default='toy')
    seeds = serializers.ListField(child=serializers.IntegerField(min_value=0), min_length=1, default=lambda: [0])
    epochs = serializers.IntegerField(min_value=1)
    dataset = serializers.CharField(required=False, allow_null=True, default=None)
    eval_dataset = serializers.CharField(required=False, allow_null=True, default=None)
    synthetic = serializers.CharField(required=False, allow_null=True, default=None)
    short_term_nf = serializers.IntegerField(min_value=2, default=3)
    long_term_cells = serializers.IntegerField(min_value=1, default=2)
    exclude_warmup = serializers.BooleanField(default=False)

    def validate(self, attrs):
        if not attrs.get('dataset') and not attrs.get('synthetic'):
            raise serializers.ValidationError('an ablation grid needs a dataset directory or a synthetic spec')
        if attrs['axis'] == 'memory_onoff':
            unknown = set(map(str, attrs['values'])) - {'none', 'short', 'long', 'both'}
            if unknown:
                raise serializers.ValidationError(f'unknown memory settings: {sorted(unknown)}')
        else:
            try:
                attrs['values'] = [int(value) for value in attrs['values']]
            except (TypeError, ValueError):
                raise serializers.ValidationError(f"{attrs['axis']} values must be integers")
        return attrs


# Records

class EpochMetricSerializer(serializers.ModelSerializer):
    class Meta:
        model = EpochMetric
        fields = ['epoch', 'mean_loss', 'auc']


class TrainingRunSerializer(serializers.ModelSerializer):
    epochs = EpochMetricSerializer(many=True, read_only=True)

    class Meta:
        model = TrainingRun
        fields = [
            'id', 'name', 'seed', 'output_dir', 'status', 'steps',
            'best_auc', 'best_epoch', 'final_auc', 'error', 'epochs',
        ]


class EvaluationSerializer(serializers.ModelSerializer):
    class Meta:
        model = Evaluation
        fields = [
            'checkpoint', 'dataset', 'overall_auc', 'per_video_mean_auc',
            'num_frames', 'num_videos', 'exclude_warmup', 'per_class', 'failed_videos',
        ]


class AblationResultSerializer(serializers.ModelSerializer):
    class Meta:
        model = AblationResult
        fields = ['axis', 'value', 'seed', 'best_auc', 'best_epoch', 'final_auc', 'status', 'error']
