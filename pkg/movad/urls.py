"""
URL configuration for the movad project.

Only the admin is served; it browses the recorded training runs,
evaluations and ablation results.
"""
from django.contrib import admin
from django.urls import path

urlpatterns = [
    path('admin/', admin.site.urls),
]
